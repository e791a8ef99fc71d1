// Expects the wasm-bindgen `--target web` output in ./pkg.
import init, { score, length_penalty_curve, sigmoid_curve, tot_trajectory } from "./pkg/hotscore_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];
const DIMS = ["Des", "Eve", "Cre", "Aud", "Emo"];

// Series share the x axis (index) and are drawn on [0, 1].
function plot(canvas, series, labels = []) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#eee";
  ctx.strokeRect(30, 10, w - 40, h - 30);
  ctx.fillStyle = "#666";
  ctx.fillText("1", 18, 14);
  ctx.fillText("0", 18, h - 20);
  const n = Math.max(...series.map((s) => s.length), 2);
  series.forEach((s, j) => {
    ctx.strokeStyle = COLORS[j % COLORS.length];
    ctx.beginPath();
    s.forEach((y, i) => {
      const px = 30 + ((w - 40) * i) / (n - 1);
      const py = 10 + (h - 30) * (1 - y);
      i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
    });
    ctx.stroke();
    if (labels[j]) {
      ctx.fillStyle = COLORS[j % COLORS.length];
      ctx.fillText(labels[j], 40 + 40 * j, h - 5);
    }
  });
  ctx.fillStyle = "#666";
  ctx.fillText(String(n - 1), w - 20, h - 5);
}

function runScore() {
  $("score-err").textContent = "";
  $("score-out").innerHTML = "";
  try {
    const line = JSON.parse(score($("title").value, $("caption").value, $("comment").value, num("likes"), num("replies")));
    for (const [k, v] of Object.entries(line)) {
      const row = $("score-out").insertRow();
      row.insertCell().textContent = k;
      row.insertCell().textContent = v.toFixed(6);
    }
  } catch (e) {
    $("score-err").textContent = String(e);
  }
}

function runCurves() {
  $("curve-err").textContent = "";
  try {
    const lmax = num("lmax");
    const lp = Array.from(length_penalty_curve(num("lmin"), lmax, num("alpha"), Math.max(2 * lmax, 10)));
    plot($("lp"), [lp], ["L_p by length"]);
    const sig = Array.from(sigmoid_curve(num("k"), num("b"), 20));
    plot($("sig"), [sig], ["sigmoid by count"]);
    $("sig-note").textContent = `value at count 0: ${sig[0].toFixed(6)}`;
  } catch (e) {
    $("curve-err").textContent = String(e);
  }
}

function runTot() {
  $("tot-err").textContent = "";
  try {
    const t = JSON.parse(tot_trajectory(num("w0"), num("lr"), $("grads").value, $("ascent").checked, 10000));
    const start = Array(5).fill(num("w0"));
    const rows = [start, ...t.history];
    plot($("traj"), DIMS.map((_, i) => rows.map((r) => r[i])), DIMS);
    $("tot-note").textContent = `${t.iterations} iterations, stopped: ${t.stop}`;
  } catch (e) {
    $("tot-err").textContent = String(e);
  }
}

await init();
$("score-btn").onclick = runScore;
$("tot-btn").onclick = runTot;
for (const id of ["lmin", "lmax", "alpha", "k", "b"]) $(id).oninput = runCurves;
runScore();
runCurves();
runTot();
