//! Character classes and tokenizers shared by the filters, metrics and
//! evaluation code.

use unicode_normalization::UnicodeNormalization;

/// Pictographic code point ranges treated as emoji.
const EMOJI_RANGES: &[(u32, u32)] = &[
    (0x00A9, 0x00A9),
    (0x00AE, 0x00AE),
    (0x203C, 0x203C),
    (0x2049, 0x2049),
    (0x2122, 0x2122),
    (0x2139, 0x2139),
    (0x2194, 0x2199),
    (0x21A9, 0x21AA),
    (0x231A, 0x231B),
    (0x2328, 0x2328),
    (0x23CF, 0x23CF),
    (0x23E9, 0x23F3),
    (0x23F8, 0x23FA),
    (0x24C2, 0x24C2),
    (0x25AA, 0x25AB),
    (0x25B6, 0x25B6),
    (0x25C0, 0x25C0),
    (0x25FB, 0x25FE),
    (0x2600, 0x27BF),
    (0x2934, 0x2935),
    (0x2B05, 0x2B07),
    (0x2B1B, 0x2B1C),
    (0x2B50, 0x2B50),
    (0x2B55, 0x2B55),
    (0x3030, 0x3030),
    (0x303D, 0x303D),
    (0x3297, 0x3297),
    (0x3299, 0x3299),
    (0xFE0F, 0xFE0F),
    (0x1F000, 0x1FAFF),
    (0xE0020, 0xE007F),
];

const CJK_RANGES: &[(u32, u32)] = &[
    (0x3000, 0x303F),
    (0x3040, 0x30FF),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xAC00, 0xD7AF),
    (0xF900, 0xFAFF),
    (0xFF00, 0xFFEF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x2F800, 0x2FA1F),
];

fn in_ranges(c: char, ranges: &[(u32, u32)]) -> bool {
    let cp = c as u32;
    ranges.iter().any(|&(lo, hi)| cp >= lo && cp <= hi)
}

pub fn is_emoji(c: char) -> bool {
    in_ranges(c, EMOJI_RANGES)
}

/// CJK ideographs, kana, hangul, CJK punctuation and full-width forms.
pub fn is_cjk(c: char) -> bool {
    in_ranges(c, CJK_RANGES)
}

/// Han ideographs only (no punctuation or full-width forms).
pub fn is_han(c: char) -> bool {
    let cp = c as u32;
    (0x4E00..=0x9FFF).contains(&cp)
        || (0x3400..=0x4DBF).contains(&cp)
        || (0xF900..=0xFAFF).contains(&cp)
        || (0x20000..=0x2A6DF).contains(&cp)
        || (0x2A700..=0x2EBEF).contains(&cp)
}

/// Length in Unicode scalar values after trimming surrounding whitespace.
pub fn char_len(text: &str) -> usize {
    text.trim().chars().count()
}

/// NFC normalization with ASCII letters lowercased. Non-ASCII text is kept
/// verbatim apart from normalization.
pub fn normalize(text: &str) -> String {
    text.nfc().map(|c| c.to_ascii_lowercase()).collect()
}

/// Evaluation tokenizer: every CJK character is a token of its own, other
/// characters are grouped into whitespace-delimited words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if is_cjk(c) {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(c.to_string());
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Content tokens used for keyword extraction: lowercased alphanumeric words
/// outside CJK, and Han runs split into overlapping character bigrams (a run of
/// one character yields that character).
pub fn content_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut han_run: Vec<char> = Vec::new();

    fn flush_han(run: &mut Vec<char>, out: &mut Vec<String>) {
        match run.len() {
            0 => {}
            1 => out.push(run[0].to_string()),
            _ => out.extend(run.windows(2).map(|w| w.iter().collect::<String>())),
        }
        run.clear();
    }

    for c in text.nfc() {
        if is_han(c) {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            han_run.push(c);
        } else if c.is_alphanumeric() && !is_cjk(c) {
            flush_han(&mut han_run, &mut tokens);
            word.extend(c.to_lowercase());
        } else {
            flush_han(&mut han_run, &mut tokens);
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        }
    }
    flush_han(&mut han_run, &mut tokens);
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}
