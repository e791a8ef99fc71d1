use std::collections::BTreeMap;

use super::{ProviderError, RemoteClient, Task};

/// A generation request. `template` holds `{name}` placeholders filled from
/// `vars`; `{{` and `}}` are literal braces and unknown placeholders are kept
/// verbatim. `instruction` is only sent to remote generators.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Prompt {
    pub instruction: String,
    pub template: String,
    pub vars: BTreeMap<String, String>,
}

impl Prompt {
    pub fn new(template: &str) -> Self {
        Self {
            template: template.to_string(),
            ..Default::default()
        }
    }

    pub fn instruction(mut self, instruction: &str) -> Self {
        self.instruction = instruction.to_string();
        self
    }

    pub fn var(mut self, name: &str, value: &str) -> Self {
        self.vars.insert(name.to_string(), value.to_string());
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.template.len());
        let mut rest = self.template.as_str();
        while let Some(i) = rest.find(['{', '}']) {
            out.push_str(&rest[..i]);
            let tail = &rest[i..];
            if tail.starts_with("{{") || tail.starts_with("}}") {
                out.push_str(&tail[..1]);
                rest = &tail[2..];
            } else if tail.starts_with('{') {
                match tail.find('}') {
                    Some(close) => {
                        let name = &tail[1..close];
                        match self.vars.get(name) {
                            Some(v) => out.push_str(v),
                            None => out.push_str(&tail[..=close]),
                        }
                        rest = &tail[close + 1..];
                    }
                    None => {
                        out.push_str(tail);
                        rest = "";
                    }
                }
            } else {
                out.push('}');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }

    /// Text sent to a remote model: instruction, blank line, rendered body.
    pub fn remote_input(&self) -> String {
        let body = self.render();
        if self.instruction.is_empty() {
            body
        } else {
            format!("{}\n\n{}", self.instruction, body)
        }
    }
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError>;
}

/// Offline generator: the rendered template, trimmed.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl TextGenerator for TemplateGenerator {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let out = prompt.render().trim().to_string();
        if out.is_empty() {
            return Err(ProviderError::EmptyInput("generate_text"));
        }
        Ok(out)
    }
}

/// Remote generation. Failures are returned to the caller, never replaced
/// by template output.
pub struct RemoteGenerator {
    client: RemoteClient,
}

impl RemoteGenerator {
    pub fn new(client: RemoteClient) -> Self {
        Self { client }
    }
}

impl TextGenerator for RemoteGenerator {
    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let input = prompt.remote_input();
        if input.trim().is_empty() {
            return Err(ProviderError::EmptyInput("generate_text"));
        }
        let out = self.client.call(Task::Generate, &input, 0)?;
        match out.as_str().map(str::trim) {
            Some(s) if !s.is_empty() => Ok(s.to_string()),
            _ => Err(ProviderError::Remote(
                "generate output must be a non-empty string".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_identity() {
        let p = Prompt::new("Describe: {X}").var("X", "crepes");
        assert_eq!(TemplateGenerator.generate(&p).unwrap(), "Describe: crepes");
        assert_eq!(
            TemplateGenerator.generate(&p).unwrap(),
            TemplateGenerator.generate(&p).unwrap()
        );
    }

    #[test]
    fn render_rules() {
        let p = Prompt::new("{{a}} {b} {missing} }} {").var("b", "B");
        assert_eq!(p.render(), "{a} B {missing} } {");
    }

    #[test]
    fn empty_render_is_error() {
        assert!(TemplateGenerator.generate(&Prompt::new("{x}").var("x", " ")).is_err());
    }

    #[test]
    fn remote_input_prefixes_instruction() {
        let p = Prompt::new("{c}").var("c", "好吃").instruction("Rewrite");
        assert_eq!(p.remote_input(), "Rewrite\n\n好吃");
    }
}
