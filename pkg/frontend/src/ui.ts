// DOM bindings for the task panel: sidebar of active/deleted tasks, a
// creation form with config editor, run control with progress bar, the live
// output window, and the report view with its two charts.

import { PanelController, PanelView, reportCharts } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

const DEFAULT_CONFIG = `{
  "solver": "mocksolver",
  "max-distinct-para-combos": 20,
  "max-tuning-time": 300,
  "max-eval-time": 10,
  "strategy": "surrogate"
}`;

export function mountPanel(controller: PanelController): void {
  el<HTMLTextAreaElement>("config-editor").value = DEFAULT_CONFIG;

  el("create-btn").addEventListener("click", async () => {
    const name = window.prompt("Task name", "my tuning task");
    if (name === null) return;
    const solver = el<HTMLInputElement>("solver-input").value.trim() || "mocksolver";
    await controller.createTask(name, solver, el<HTMLTextAreaElement>("config-editor").value);
  });

  el<HTMLInputElement>("problem-file").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    for (const file of Array.from(input.files ?? [])) {
      await controller.addProblem(file.name, file);
    }
    input.value = "";
  });

  el("run-btn").addEventListener("click", () => {
    void controller.runToCompletion(400);
  });
  el("stop-btn").addEventListener("click", () => void controller.stop());

  render(controller, controller.view);
}

export function render(controller: PanelController, view: PanelView): void {
  renderSidebar(controller, view);
  renderStatus(view);
  renderOutput(view);
  renderErrors(view);
  renderReport(controller, view);
}

function renderSidebar(controller: PanelController, view: PanelView): void {
  const paint = (rootId: string, tasks: PanelView["activeTasks"], deleted: boolean) => {
    const root = el(rootId);
    root.innerHTML = tasks.length ? "" : "<li class='empty'>none</li>";
    for (const task of tasks) {
      const li = document.createElement("li");
      li.className = task.task_id === view.currentTask ? "task selected" : "task";
      li.innerHTML = `<span class="task-name">${esc(task.name)}</span>
        <span class="badge badge-${esc(task.status)}">${esc(task.status)}</span>`;
      if (!deleted) {
        li.addEventListener("click", () => void controller.selectTask(task.task_id));
        const del = document.createElement("button");
        del.textContent = "x";
        del.className = "delete-btn";
        del.title = "delete task";
        del.addEventListener("click", (ev) => {
          ev.stopPropagation();
          void controller.remove(task.task_id);
        });
        li.appendChild(del);
      }
      root.appendChild(li);
    }
  };
  paint("active-tasks", view.activeTasks, false);
  paint("deleted-tasks", view.deletedTasks, true);
}

function renderStatus(view: PanelView): void {
  el("current-task").textContent = view.currentTask ?? "no task selected";
  el("task-state").textContent = view.state || "-";
  el("task-state").className = `badge badge-${view.state || "none"}`;
  const pct = Math.round(view.progress * 100);
  el("progress-fill").style.width = `${pct}%`;
  el("progress-label").textContent = view.state ? `${pct}%` : "";
  el("problem-list").innerHTML = view.problems.map((p) => `<li>${esc(p)}</li>`).join("");
  el("reconnect-banner").style.display = view.connectivity ? "none" : "block";
}

function renderOutput(view: PanelView): void {
  const pane = el("output-window");
  pane.textContent = view.outputLines.join("\n");
  pane.scrollTop = pane.scrollHeight;
}

function renderErrors(view: PanelView): void {
  const box = el("error-box");
  const entries = Object.entries(view.fieldErrors);
  if (entries.length > 0) {
    box.innerHTML = entries
      .map(([key, msg]) => `<div class="field-error"><b>${esc(key)}</b>: ${esc(msg)}</div>`)
      .join("");
  } else {
    box.innerHTML = view.lastError ? `<div class="field-error">${esc(view.lastError)}</div>` : "";
  }
}

function barChartSvg(rows: { label: string; count: number }[]): string {
  const width = 320, barH = 22, gap = 6, labelW = 70;
  const max = Math.max(1, ...rows.map((r) => r.count));
  const bars = rows.map((r, i) => {
    const y = i * (barH + gap);
    const w = Math.round(((width - labelW - 40) * r.count) / max);
    return `<text x="0" y="${y + 15}" class="chart-label">${esc(r.label)}</text>
      <rect x="${labelW}" y="${y}" width="${w}" height="${barH}" class="chart-bar"></rect>
      <text x="${labelW + w + 6}" y="${y + 15}" class="chart-value">${r.count}</text>`;
  });
  const height = rows.length * (barH + gap);
  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">${bars.join("")}</svg>`;
}

function solvableSvg(points: { budget: number; default: number; tuned: number }[]): string {
  const width = 320, height = 140, pad = 28;
  const maxCount = Math.max(1, ...points.map((p) => Math.max(p.default, p.tuned)));
  const maxBudget = Math.max(1e-9, ...points.map((p) => p.budget));
  const x = (b: number) => pad + ((width - 2 * pad) * b) / maxBudget;
  const y = (c: number) => height - pad - ((height - 2 * pad) * c) / maxCount;
  const path = (key: "default" | "tuned") =>
    points.map((p, i) => `${i === 0 ? "M" : "L"}${x(p.budget).toFixed(1)},${y(p[key]).toFixed(1)}`).join(" ");
  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">
    <path d="${path("default")}" class="line-default" fill="none"></path>
    <path d="${path("tuned")}" class="line-tuned" fill="none"></path>
    <text x="${pad}" y="12" class="chart-label">solvable problems vs budget
      (grey default, green tuned)</text>
  </svg>`;
}

function renderReport(controller: PanelController, view: PanelView): void {
  const box = el("report-box");
  if (!view.report) {
    box.innerHTML = "<p class='muted'>no report yet</p>";
    return;
  }
  const r = view.report;
  const urls = controller.downloadUrls();
  const charts = reportCharts(r);
  const rows = r.per_instance
    .map((p) => `<tr><td>${esc(p.instance)}</td><td>${p.default.toFixed(4)}</td>
      <td>${p.tuned.toFixed(4)}</td><td>${p.ratio !== undefined ? p.ratio.toFixed(2) + "x" : "-"}</td></tr>`)
    .join("");
  box.innerHTML = `
    <h3>speed-up ${r.speedup.toFixed(2)}x</h3>
    <p>default ${r.baseline_cost.toFixed(4)} &rarr; tuned ${r.best_cost.toFixed(4)}
       over ${r.evaluations} evaluations (${r.distinct_configs} distinct configs,
       stopped by ${esc(r.termination_reason || "n/a")})</p>
    <p class="downloads">
      <a href="${urls?.recommended ?? "#"}" download>recommended parameters</a> ·
      <a href="${urls?.log ?? "#"}" download>tuning log</a>
    </p>
    <table class="per-instance">
      <tr><th>instance</th><th>default</th><th>tuned</th><th>ratio</th></tr>${rows}
    </table>
    <div class="charts">
      <div>${barChartSvg(charts.ratioBuckets)}</div>
      <div>${solvableSvg(charts.solvable)}</div>
    </div>
    <pre class="best-config">${esc(JSON.stringify(r.best_config, null, 2))}</pre>`;
}
