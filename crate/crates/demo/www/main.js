import init, { synth_example, supervision_matrix, noam_curve, explore_loss } from "./pkg/bidaf_sa_demo.js";

const $ = (id) => document.getElementById(id);

function shade(v) {
  const c = Math.round(255 * (1 - v));
  return `rgb(${c},${c},255)`;
}

function drawGrid(canvas, n, value) {
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / n;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      ctx.fillStyle = shade(value(i, j));
      ctx.fillRect(j * cell, i * cell, cell - 1, cell - 1);
    }
  }
}

function showError(el, e) {
  el.textContent = String(e);
  el.className = "readout error";
}

function heatmap() {
  const info = $("hm-info");
  info.className = "readout";
  try {
    const line = synth_example(Number($("hm-seed").value));
    const m = JSON.parse(supervision_matrix(line, $("hm-kind").value));
    $("hm-tokens").textContent = m.tokens.map((t, i) => `${i}:${t}`).join(" ");
    const on = m.rows.map((r) => new Set(r));
    drawGrid($("hm-canvas"), m.n, (i, j) => (on[i].has(j) ? 1 : 0));
    const entries = m.rows.reduce((a, r) => a + r.length, 0);
    info.textContent = `n = ${m.n}, rows with targets k = ${m.k}, entries = ${entries}`;
  } catch (e) {
    showError(info, e);
  }
}

function lrCurve() {
  const info = $("lr-info");
  info.className = "readout";
  const canvas = $("lr-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  try {
    const steps = Number($("lr-s").value);
    const pts = noam_curve(Number($("lr-d").value), Number($("lr-w").value), steps, Math.min(steps, 400));
    const max = Math.max(...pts);
    const pad = 20;
    ctx.strokeStyle = "#24c";
    ctx.beginPath();
    pts.forEach((v, i) => {
      const x = pad + (i / (pts.length - 1)) * (canvas.width - 2 * pad);
      const y = canvas.height - pad - (v / max) * (canvas.height - 2 * pad);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
    info.textContent = `peak ${max.toExponential(4)}, final ${pts[pts.length - 1].toExponential(4)}`;
  } catch (e) {
    showError(info, e);
  }
}

let cells = new Uint8Array(36);

function explorer() {
  const info = $("ex-info");
  info.className = "readout";
  const n = Number($("ex-n").value);
  if (cells.length !== n * n) {
    cells = new Uint8Array(n * n);
  }
  try {
    const r = JSON.parse(explore_loss(n, cells, Number($("ex-sharp").value), $("ex-weighted").checked));
    const canvas = $("ex-canvas");
    drawGrid(canvas, n, (i, j) => r.attention[i][j]);
    const ctx = canvas.getContext("2d");
    const cell = canvas.width / n;
    ctx.strokeStyle = "#d22";
    ctx.lineWidth = 2;
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < n; j++) {
        if (cells[i * n + j]) ctx.strokeRect(j * cell + 2, i * cell + 2, cell - 5, cell - 5);
      }
    }
    const mass = r.row_mass.map((m) => (m === null ? "-" : m.toFixed(3))).join(" ");
    info.textContent =
      r.loss === null ? "no row has targets: loss undefined, no gradient" : `loss ${r.loss.toFixed(5)}, k = ${r.k}, row mass ${mass}`;
  } catch (e) {
    showError(info, e);
  }
}

$("ex-canvas").addEventListener("click", (ev) => {
  const n = Number($("ex-n").value);
  const rect = ev.target.getBoundingClientRect();
  const j = Math.floor(((ev.clientX - rect.left) / rect.width) * n);
  const i = Math.floor(((ev.clientY - rect.top) / rect.height) * n);
  cells[i * n + j] ^= 1;
  explorer();
});

await init();
for (const id of ["hm-seed", "hm-kind"]) $(id).addEventListener("input", heatmap);
for (const id of ["lr-d", "lr-w", "lr-s"]) $(id).addEventListener("input", lrCurve);
for (const id of ["ex-n", "ex-sharp", "ex-weighted"]) $(id).addEventListener("input", explorer);
heatmap();
lrCurve();
explorer();
