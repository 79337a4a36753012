// Typed client for the task API (/api/v1). The panel holds no authoritative
// state: everything here is re-fetchable, so a page reload reconstructs the
// whole view from these calls.

export interface TaskSummary {
  task_id: string;
  name: string;
  status: string;
  progress: number;
  termination_reason: string;
}

export interface TaskStatus {
  "task-id": string;
  state: string;
  progress: number;
  "termination-reason": string;
  error: string;
}

export interface OutputChunk {
  lines: string[];
  next: number;
}

export interface PerInstance {
  instance: string;
  default: number;
  tuned: number;
  ratio?: number;
}

export interface TuningReport {
  task_id: string;
  best_config: Record<string, unknown>;
  best_config_id: string;
  baseline_cost: number;
  best_cost: number;
  speedup: number;
  per_instance: PerInstance[];
  evaluations: number;
  distinct_configs: number;
  task_wallclock_seconds: number;
  termination_reason: string;
}

export class ApiError extends Error {
  status: number;
  fieldErrors: Record<string, string>;

  constructor(status: number, message: string, fieldErrors: Record<string, string> = {}) {
    super(message);
    this.status = status;
    this.fieldErrors = fieldErrors;
  }
}

async function raise(res: Response): Promise<never> {
  let message = `${res.status} ${res.statusText}`;
  let fields: Record<string, string> = {};
  try {
    const body = await res.json();
    if (body && body.detail) {
      if (typeof body.detail === "string") {
        message = body.detail;
      } else if (body.detail.errors) {
        fields = body.detail.errors;
        message = Object.values(fields).join("; ") || message;
      }
    }
  } catch {
    // non-JSON error body: keep the status line
  }
  throw new ApiError(res.status, message, fields);
}

export class ApiClient {
  base: string;

  constructor(base: string = "") {
    this.base = base.replace(/\/$/, "");
  }

  private url(path: string): string {
    return `${this.base}/api/v1${path}`;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.url(path), init);
    if (!res.ok) await raise(res);
    if (res.status === 204) return undefined as T;
    return (await res.json()) as T;
  }

  listTasks(state: "active" | "deleted"): Promise<{ tasks: TaskSummary[] }> {
    return this.json(`/tasks?state=${state}`);
  }

  createTask(name: string, solver: string, config: Record<string, unknown>): Promise<{ "task-id": string }> {
    return this.json("/tasks", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ name, solver, config }),
    });
  }

  uploadProblem(taskId: string, filename: string, payload: Blob): Promise<{ "stored-path": string }> {
    const form = new FormData();
    form.append("file", payload, filename);
    return this.json(`/tasks/${taskId}/problems`, { method: "POST", body: form });
  }

  runTask(taskId: string): Promise<{ state: string }> {
    return this.json(`/tasks/${taskId}/run`, { method: "POST" });
  }

  stopTask(taskId: string): Promise<{ state: string }> {
    return this.json(`/tasks/${taskId}/stop`, { method: "POST" });
  }

  deleteTask(taskId: string): Promise<void> {
    return this.json(`/tasks/${taskId}`, { method: "DELETE" });
  }

  taskStatus(taskId: string): Promise<TaskStatus> {
    return this.json(`/tasks/${taskId}`);
  }

  output(taskId: string, since: number): Promise<OutputChunk> {
    return this.json(`/tasks/${taskId}/output?since=${since}`);
  }

  report(taskId: string): Promise<TuningReport> {
    return this.json(`/tasks/${taskId}/report`);
  }

  fileUrl(taskId: string, kind: "recommended" | "log" | "history"): string {
    return this.url(`/tasks/${taskId}/files/${kind}`);
  }
}

// Cursor-based output tail. Lost connectivity never loses lines: the cursor
// only advances after a chunk is delivered, so polling resumes gap-free.
export class OutputPoller {
  private api: ApiClient;
  private taskId: string;
  cursor = 0;
  lines: string[] = [];
  onLines: (lines: string[]) => void;
  onConnectivity: (ok: boolean) => void;

  constructor(
    api: ApiClient,
    taskId: string,
    onLines: (lines: string[]) => void = () => {},
    onConnectivity: (ok: boolean) => void = () => {},
  ) {
    this.api = api;
    this.taskId = taskId;
    this.onLines = onLines;
    this.onConnectivity = onConnectivity;
  }

  async pollOnce(): Promise<string[]> {
    try {
      const chunk = await this.api.output(this.taskId, this.cursor);
      this.onConnectivity(true);
      if (chunk.lines.length > 0) {
        this.cursor = chunk.next;
        this.lines.push(...chunk.lines);
        this.onLines(chunk.lines);
      }
      return chunk.lines;
    } catch (err) {
      if (err instanceof ApiError) throw err; // server-side error, not connectivity
      this.onConnectivity(false);
      return [];
    }
  }

  // poll until the task leaves the running states; resolves with all lines
  async drain(isActive: () => Promise<boolean>, delayMs = 150): Promise<string[]> {
    for (;;) {
      await this.pollOnce();
      if (!(await isActive())) break;
      await new Promise((r) => setTimeout(r, delayMs));
    }
    // one final fetch for lines written between the last poll and the finish
    await this.pollOnce();
    return this.lines;
  }
}
