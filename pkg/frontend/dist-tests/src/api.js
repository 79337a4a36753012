// Typed client for the task API (/api/v1). The panel holds no authoritative
// state: everything here is re-fetchable, so a page reload reconstructs the
// whole view from these calls.
export class ApiError extends Error {
    constructor(status, message, fieldErrors = {}) {
        super(message);
        this.status = status;
        this.fieldErrors = fieldErrors;
    }
}
async function raise(res) {
    let message = `${res.status} ${res.statusText}`;
    let fields = {};
    try {
        const body = await res.json();
        if (body && body.detail) {
            if (typeof body.detail === "string") {
                message = body.detail;
            }
            else if (body.detail.errors) {
                fields = body.detail.errors;
                message = Object.values(fields).join("; ") || message;
            }
        }
    }
    catch {
        // non-JSON error body: keep the status line
    }
    throw new ApiError(res.status, message, fields);
}
export class ApiClient {
    constructor(base = "") {
        this.base = base.replace(/\/$/, "");
    }
    url(path) {
        return `${this.base}/api/v1${path}`;
    }
    async json(path, init) {
        const res = await fetch(this.url(path), init);
        if (!res.ok)
            await raise(res);
        if (res.status === 204)
            return undefined;
        return (await res.json());
    }
    listTasks(state) {
        return this.json(`/tasks?state=${state}`);
    }
    createTask(name, solver, config) {
        return this.json("/tasks", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ name, solver, config }),
        });
    }
    uploadProblem(taskId, filename, payload) {
        const form = new FormData();
        form.append("file", payload, filename);
        return this.json(`/tasks/${taskId}/problems`, { method: "POST", body: form });
    }
    runTask(taskId) {
        return this.json(`/tasks/${taskId}/run`, { method: "POST" });
    }
    stopTask(taskId) {
        return this.json(`/tasks/${taskId}/stop`, { method: "POST" });
    }
    deleteTask(taskId) {
        return this.json(`/tasks/${taskId}`, { method: "DELETE" });
    }
    taskStatus(taskId) {
        return this.json(`/tasks/${taskId}`);
    }
    output(taskId, since) {
        return this.json(`/tasks/${taskId}/output?since=${since}`);
    }
    report(taskId) {
        return this.json(`/tasks/${taskId}/report`);
    }
    fileUrl(taskId, kind) {
        return this.url(`/tasks/${taskId}/files/${kind}`);
    }
}
// Cursor-based output tail. Lost connectivity never loses lines: the cursor
// only advances after a chunk is delivered, so polling resumes gap-free.
export class OutputPoller {
    constructor(api, taskId, onLines = () => { }, onConnectivity = () => { }) {
        this.cursor = 0;
        this.lines = [];
        this.api = api;
        this.taskId = taskId;
        this.onLines = onLines;
        this.onConnectivity = onConnectivity;
    }
    async pollOnce() {
        try {
            const chunk = await this.api.output(this.taskId, this.cursor);
            this.onConnectivity(true);
            if (chunk.lines.length > 0) {
                this.cursor = chunk.next;
                this.lines.push(...chunk.lines);
                this.onLines(chunk.lines);
            }
            return chunk.lines;
        }
        catch (err) {
            if (err instanceof ApiError)
                throw err; // server-side error, not connectivity
            this.onConnectivity(false);
            return [];
        }
    }
    // poll until the task leaves the running states; resolves with all lines
    async drain(isActive, delayMs = 150) {
        for (;;) {
            await this.pollOnce();
            if (!(await isActive()))
                break;
            await new Promise((r) => setTimeout(r, delayMs));
        }
        // one final fetch for lines written between the last poll and the finish
        await this.pollOnce();
        return this.lines;
    }
}
