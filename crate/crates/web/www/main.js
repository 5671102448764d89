import init, { deblatt_scene, fit_stroke, constant_offset_tiou } from "./pkg/tbd_web.js";

const $ = (id) => document.getElementById(id);

function putRgba(canvas, bytes, w, h) {
  canvas.width = w;
  canvas.height = h;
  canvas.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(bytes), w, h), 0, 0);
}

function drawPath(canvas, xy, color) {
  const ctx = canvas.getContext("2d");
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (let k = 0; k < xy.length; k += 2) {
    const [x, y] = [xy[k] + 0.5, xy[k + 1] + 0.5];
    k === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
  }
  ctx.stroke();
}

function bindOutput(id, fmt = (v) => v) {
  const show = () => ($(`${id}-v`).textContent = fmt($(id).value));
  $(id).addEventListener("input", show);
  show();
}

function runScene() {
  const args = ["len", "ang", "bend", "noise"].map((id) => Number($(id).value));
  try {
    const s = deblatt_scene(...args, Number($("seed").value));
    putRgba($("frame"), s.frame(), s.width, s.height);
    putRgba($("blur"), s.blur(), s.width, s.height);
    for (const c of [$("frame"), $("blur")]) {
      drawPath(c, s.truth(), "#2a2");
      drawPath(c, s.fitted(), "#e22");
    }
    $("scene-stats").textContent =
      `blur error ${s.blur_error.toFixed(3)}, fit error ${s.fit_error.toFixed(3)}`;
    s.free();
  } catch (e) {
    $("scene-stats").textContent = `failed: ${e.message ?? e}`;
  }
}

function setupPad() {
  const pad = $("pad");
  const ctx = pad.getContext("2d");
  let points = null;
  const pos = (ev) => {
    const r = pad.getBoundingClientRect();
    return [((ev.clientX - r.left) * pad.width) / r.width, ((ev.clientY - r.top) * pad.height) / r.height];
  };
  pad.addEventListener("pointerdown", (ev) => {
    points = pos(ev);
    ctx.fillStyle = "#000";
    ctx.fillRect(0, 0, pad.width, pad.height);
  });
  pad.addEventListener("pointermove", (ev) => {
    if (!points) return;
    const [x, y] = pos(ev);
    ctx.strokeStyle = "#888";
    ctx.beginPath();
    ctx.moveTo(points.at(-2), points.at(-1));
    ctx.lineTo(x, y);
    ctx.stroke();
    points.push(x, y);
  });
  pad.addEventListener("pointerup", () => {
    const pts = points;
    points = null;
    try {
      const fit = fit_stroke(new Float64Array(pts), pad.width, pad.height);
      putRgba(pad, fit.blur(), pad.width, pad.height);
      drawPath(pad, fit.fitted(), "#e22");
      $("stroke-stats").textContent =
        `${fit.pieces} piece${fit.pieces > 1 ? "s" : ""}, fit error ${fit.fit_error.toFixed(3)}`;
      fit.free();
    } catch (e) {
      $("stroke-stats").textContent = `failed: ${e.message ?? e}`;
    }
  });
  ctx.fillRect(0, 0, pad.width, pad.height);
}

function runTiou() {
  const v = constant_offset_tiou(Number($("off").value), Number($("rad").value));
  $("tiou").textContent = `TIoU ${v.toFixed(3)}`;
}

await init();
bindOutput("len");
bindOutput("ang", (v) => `${v}°`);
bindOutput("bend");
bindOutput("noise");
bindOutput("rad");
bindOutput("off");
for (const id of ["len", "ang", "bend", "noise", "seed"]) $(id).addEventListener("change", runScene);
for (const id of ["rad", "off"]) $(id).addEventListener("input", runTiou);
setupPad();
runScene();
runTiou();
