// Panel state and behaviors, DOM-free so tests can drive the same code the
// page runs. The five-step workflow maps to: createTask (name), addProblem
// (upload), editConfig/validate (documented config keys), run + poll, report.

import { ApiClient, ApiError, OutputPoller, TaskSummary, TuningReport } from "./api.js";

// the task-configuration vocabulary the editor validates against
export const CONFIG_KEYS: Record<string, "string" | "integer" | "number" | "list"> = {
  "tuning-objective": "string",
  "max-distinct-para-combos": "integer",
  "max-tuning-time": "integer",
  "max-eval-time": "integer",
  "log-level": "string",
  "verbose": "integer",
  "concurrency": "integer",
  "runs-per-config": "integer",
  "seed": "integer",
  "strategy": "string",
  "capping": "string",
  "parameters": "list",
  "problems": "list",
  "problem": "string",
  "solver": "string",
  "name": "string",
};

const POSITIVE_KEYS = new Set([
  "max-distinct-para-combos", "max-tuning-time", "max-eval-time",
  "concurrency", "runs-per-config",
]);

export interface ValidationIssue {
  key: string;
  message: string;
}

export function validateConfigText(text: string): { config?: Record<string, unknown>; issues: ValidationIssue[] } {
  let doc: unknown;
  try {
    doc = text.trim() === "" ? {} : JSON.parse(text);
  } catch (err) {
    return { issues: [{ key: "(json)", message: `configuration is not valid JSON: ${err}` }] };
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return { issues: [{ key: "(json)", message: "configuration must be a JSON object" }] };
  }
  const issues: ValidationIssue[] = [];
  const config = doc as Record<string, unknown>;
  for (const [rawKey, value] of Object.entries(config)) {
    const key = rawKey.replace(/_/g, "-");
    const kind = CONFIG_KEYS[key];
    if (kind === undefined) {
      issues.push({ key: rawKey, message: `unknown configuration key '${rawKey}'` });
      continue;
    }
    if (kind === "integer" && (typeof value !== "number" || !Number.isInteger(value))) {
      issues.push({ key: rawKey, message: `${key} expects an integer` });
    } else if (kind === "list" && !Array.isArray(value) && typeof value !== "string") {
      issues.push({ key: rawKey, message: `${key} expects a list` });
    } else if (kind === "string" && typeof value !== "string") {
      issues.push({ key: rawKey, message: `${key} expects a string` });
    }
    if (POSITIVE_KEYS.has(key) && typeof value === "number" && value <= 0) {
      issues.push({ key: rawKey, message: `${key} must be > 0` });
    }
  }
  return { config, issues };
}

export interface ReportCharts {
  ratioBuckets: { label: string; count: number }[];
  solvable: { budget: number; default: number; tuned: number }[];
}

// chart data for the report view: a speed-up distribution over
// fixed bins and a solvable-problems-vs-budget curve
export function reportCharts(report: TuningReport): ReportCharts {
  const bins = [
    { label: "<2x", lo: 0, hi: 2 },
    { label: "2-4x", lo: 2, hi: 4 },
    { label: "4-32x", lo: 4, hi: 32 },
    { label: "32-100x", lo: 32, hi: 100 },
    { label: ">=100x", lo: 100, hi: Infinity },
  ];
  const ratios = report.per_instance
    .map((p) => (p.ratio !== undefined ? p.ratio : p.tuned > 0 ? p.default / p.tuned : Infinity));
  const ratioBuckets = bins.map((b) => ({
    label: b.label,
    count: ratios.filter((r) => r >= b.lo && r < b.hi).length,
  }));

  const times = report.per_instance.flatMap((p) => [p.default, p.tuned]).filter((t) => isFinite(t));
  const top = times.length ? Math.max(...times) : 1;
  const budgets = [0.25, 0.5, 0.75, 1.0].map((f) => top * f);
  const solvable = budgets.map((budget) => ({
    budget,
    default: report.per_instance.filter((p) => p.default <= budget).length,
    tuned: report.per_instance.filter((p) => p.tuned <= budget).length,
  }));
  return { ratioBuckets, solvable };
}

export interface PanelView {
  activeTasks: TaskSummary[];
  deletedTasks: TaskSummary[];
  currentTask: string | null;
  state: string;
  progress: number;
  terminationReason: string;
  outputLines: string[];
  report: TuningReport | null;
  problems: string[];
  connectivity: boolean;
  lastError: string;
  fieldErrors: Record<string, string>;
}

export class PanelController {
  api: ApiClient;
  view: PanelView;
  onChange: (view: PanelView) => void;
  private poller: OutputPoller | null = null;

  constructor(api: ApiClient, onChange: (view: PanelView) => void = () => {}) {
    this.api = api;
    this.onChange = onChange;
    this.view = {
      activeTasks: [],
      deletedTasks: [],
      currentTask: null,
      state: "",
      progress: 0,
      terminationReason: "",
      outputLines: [],
      report: null,
      problems: [],
      connectivity: true,
      lastError: "",
      fieldErrors: {},
    };
  }

  private emit() {
    this.onChange(this.view);
  }

  private fail(err: unknown) {
    if (err instanceof ApiError) {
      this.view.lastError = err.message;
      this.view.fieldErrors = err.fieldErrors;
    } else {
      this.view.lastError = String(err);
      this.view.connectivity = false;
    }
    this.emit();
  }

  async refreshTaskLists(): Promise<void> {
    const [active, deleted] = await Promise.all([
      this.api.listTasks("active"),
      this.api.listTasks("deleted"),
    ]);
    this.view.activeTasks = active.tasks;
    this.view.deletedTasks = deleted.tasks;
    this.view.connectivity = true;
    this.emit();
  }

  // Step 1: name a new task (configText from the editor, Step 3)
  async createTask(name: string, solver: string, configText: string): Promise<string | null> {
    const { config, issues } = validateConfigText(configText);
    if (issues.length > 0 || config === undefined) {
      this.view.fieldErrors = Object.fromEntries(issues.map((i) => [i.key, i.message]));
      this.view.lastError = issues[0].message;
      this.emit();
      return null;
    }
    try {
      const res = await this.api.createTask(name, solver, config);
      const taskId = res["task-id"];
      this.view.lastError = "";
      this.view.fieldErrors = {};
      await this.selectTask(taskId);
      await this.refreshTaskLists();
      return taskId;
    } catch (err) {
      this.fail(err);
      return null;
    }
  }

  // Step 2: add problem file(s)
  async addProblem(filename: string, payload: Blob): Promise<boolean> {
    if (!this.view.currentTask) return false;
    try {
      const res = await this.api.uploadProblem(this.view.currentTask, filename, payload);
      this.view.problems.push(res["stored-path"]);
      this.view.lastError = "";
      this.emit();
      return true;
    } catch (err) {
      this.fail(err);
      return false;
    }
  }

  async selectTask(taskId: string): Promise<void> {
    this.view.currentTask = taskId;
    this.view.outputLines = [];
    this.view.report = null;
    this.view.problems = [];
    this.poller = new OutputPoller(
      this.api,
      taskId,
      (lines) => {
        this.view.outputLines.push(...lines);
        this.emit();
      },
      (ok) => {
        this.view.connectivity = ok;
        this.emit();
      },
    );
    await this.refreshStatus();
  }

  async refreshStatus(): Promise<void> {
    if (!this.view.currentTask) return;
    try {
      const doc = await this.api.taskStatus(this.view.currentTask);
      this.view.state = doc.state;
      this.view.progress = doc.progress;
      this.view.terminationReason = doc["termination-reason"];
      this.view.connectivity = true;
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  async pollOutputOnce(): Promise<void> {
    if (this.poller) {
      await this.poller.pollOnce();
      await this.refreshStatus();
    }
  }

  // Step 4: run, streaming output until the task settles
  async runToCompletion(delayMs = 150): Promise<void> {
    if (!this.view.currentTask || !this.poller) return;
    try {
      await this.api.runTask(this.view.currentTask);
    } catch (err) {
      this.fail(err);
      return;
    }
    await this.poller.drain(async () => {
      await this.refreshStatus();
      return this.view.state === "running" || this.view.state === "created";
    }, delayMs);
    await this.loadReport();
  }

  // Step 5: recommended parameters + report views
  async loadReport(): Promise<void> {
    if (!this.view.currentTask) return;
    try {
      this.view.report = await this.api.report(this.view.currentTask);
      this.emit();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.view.report = null; // unfinished: no report yet
        this.emit();
        return;
      }
      this.fail(err);
    }
  }

  downloadUrls(): { recommended: string; log: string } | null {
    if (!this.view.currentTask) return null;
    return {
      recommended: this.api.fileUrl(this.view.currentTask, "recommended"),
      log: this.api.fileUrl(this.view.currentTask, "log"),
    };
  }

  async stop(): Promise<void> {
    if (!this.view.currentTask) return;
    try {
      await this.api.stopTask(this.view.currentTask);
      await this.refreshStatus();
    } catch (err) {
      this.fail(err);
    }
  }

  async remove(taskId: string): Promise<void> {
    try {
      await this.api.deleteTask(taskId);
      if (this.view.currentTask === taskId) {
        this.view.currentTask = null;
        this.view.outputLines = [];
        this.view.report = null;
      }
      await this.refreshTaskLists();
    } catch (err) {
      this.fail(err);
    }
  }
}
