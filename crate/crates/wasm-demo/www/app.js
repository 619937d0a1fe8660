import init, { Demo } from "./pkg/protodetect_wasm.js";

const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22"];
const NOVEL = "#d62728";
const CELL = 8;

const $ = (id) => document.getElementById(id);
const canvas = $("map");
const ctx = canvas.getContext("2d");

let demo = null;
let scene = null;
let background = null;

function toCanvas([x, y]) {
  const [x0, y0, x1, y1] = scene.bounds;
  return [((x - x0) / (x1 - x0)) * canvas.width, ((y1 - y) / (y1 - y0)) * canvas.height];
}

function toWorld(px, py) {
  const [x0, y0, x1, y1] = scene.bounds;
  return [x0 + (px / canvas.width) * (x1 - x0), y1 - (py / canvas.height) * (y1 - y0)];
}

function color(cls) {
  return cls === null || cls < 0 ? NOVEL : PALETTE[cls % PALETTE.length];
}

function dot(xy, r, fill, stroke) {
  const [px, py] = toCanvas(xy);
  ctx.beginPath();
  ctx.arc(px, py, r, 0, 2 * Math.PI);
  if (fill) { ctx.fillStyle = fill; ctx.fill(); }
  if (stroke) { ctx.strokeStyle = stroke; ctx.lineWidth = 1.5; ctx.stroke(); }
}

function drawScene() {
  const cols = canvas.width / CELL;
  const rows = canvas.height / CELL;
  const grid = demo.verdictGrid(cols, rows);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.globalAlpha = 0.18;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      ctx.fillStyle = color(grid[r * cols + c]);
      ctx.fillRect(c * CELL, r * CELL, CELL, CELL);
    }
  }
  ctx.globalAlpha = 0.6;
  for (const p of scene.train) dot(p.xy, 1.5, color(p.class));
  ctx.globalAlpha = 1;
  for (const p of scene.probes) dot(p.xy, 3, null, color(p.class));
  for (const p of scene.prototypes) dot(p.xy, 4.5, "#fff", "#000");
  background = ctx.getImageData(0, 0, canvas.width, canvas.height);
}

function legend() {
  const pct = (v) => (v === null ? "n/a" : (100 * v).toFixed(1) + "%");
  const m = scene.metrics;
  $("status").textContent =
    `${scene.mode} mode · ${scene.prototypes.length} prototypes · threshold ${scene.threshold.toPrecision(4)} · ` +
    `accuracy ${pct(m.clean_accuracy)} · recall ${pct(m.detection_recall)} on held-out probes`;
  $("legend").innerHTML =
    scene.classes.map((name, i) => `<span style="background:${color(i)}"></span>${name}`).join(" ") +
    ` <span style="background:${NOVEL}"></span>flagged · ○ probes · ◯ prototypes`;
}

function train() {
  try {
    demo?.free();
    demo = new Demo(
      Number($("classes").value),
      Number($("perClass").value),
      Number($("seed").value),
      $("mode").value,
      Number($("m").value),
      $("snap").checked,
    );
    scene = JSON.parse(demo.summary());
    drawScene();
    legend();
    $("rule").textContent = "";
  } catch (e) {
    $("status").textContent = `error: ${e.message ?? e}`;
  }
}

canvas.addEventListener("click", (ev) => {
  if (!demo) return;
  const rect = canvas.getBoundingClientRect();
  const px = ev.clientX - rect.left;
  const py = ev.clientY - rect.top;
  const [x, y] = toWorld(px, py);
  let info;
  try {
    info = JSON.parse(demo.explain(x, y, Number($("topK").value)));
  } catch (e) {
    $("rule").textContent = `error: ${e.message ?? e}`;
    return;
  }
  ctx.putImageData(background, 0, 0);
  for (const n of info.nearest) {
    const [qx, qy] = toCanvas(n.xy);
    ctx.beginPath();
    ctx.moveTo(px, py);
    ctx.lineTo(qx, qy);
    ctx.strokeStyle = color(n.class);
    ctx.lineWidth = 1;
    ctx.stroke();
  }
  dot([x, y], 5, info.novel ? NOVEL : "#000");
  $("rule").textContent =
    `${info.rule}\n\nscore ${info.score.toPrecision(4)} vs threshold ${info.threshold.toPrecision(4)}`;
});

$("train").addEventListener("click", train);

await init();
train();
