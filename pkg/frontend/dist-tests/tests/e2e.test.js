// End-to-end: the five-step panel workflow against a live opttune server on
// a mock-solver task, driven through the same controller code the page runs.
// Asserts output-window/server log parity and that a "page reload" (a fresh
// controller) reconstructs the whole view from the API alone.
import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { spawn } from "node:child_process";
import { mkdtempSync, mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { ApiClient } from "../src/api.js";
import { PanelController } from "../src/state.js";
const PY = process.env.OPTTUNE_PYTHON ?? "python3";
const PORT = 18900 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;
let server;
let home;
function writeMockSolver(root) {
    const adapters = join(root, "adapters");
    mkdirSync(adapters, { recursive: true });
    const space = {
        solver: "mock",
        version: "1",
        parameters: [
            { name: "presolve", kind: "categorical", domain: ["off", "fast", "thorough"], default: "fast" },
            { name: "cuts", kind: "categorical", domain: ["off", "on", "aggressive"], default: "on" },
            { name: "rounds", kind: "integer", domain: [0, 8], default: 2 },
        ],
    };
    const spec = {
        space: "mock.params",
        hidden_optimum: { presolve: "thorough", cuts: "aggressive", rounds: 4 },
        base_time: 0.01,
        surface: { family: "quadratic", max_factor: 6.0 },
        noise: [1.0, 1.0],
    };
    const rules = [
        { name: "status", pattern: "^Result - (.+)$", kind: "string", pick: "last", required: true },
        { name: "time", pattern: "^Simulated time:\\s+([-+0-9.eE]+)", kind: "real", pick: "last", required: true },
    ];
    writeFileSync(join(adapters, "mock.params"), JSON.stringify(space));
    writeFileSync(join(adapters, "mock.spec"), JSON.stringify(spec));
    writeFileSync(join(adapters, "mock.rules"), JSON.stringify(rules));
    writeFileSync(join(adapters, "mock.adapter"), JSON.stringify({
        "solver-id": "mock",
        command: `${PY} -m opttune.mocksolver --spec {here}/mock.spec --seed {seed} {params} {problem}`,
        "param-style": "flag-value",
        "rules-file": "mock.rules",
    }));
}
before(async () => {
    home = mkdtempSync(join(tmpdir(), "opttune-e2e-"));
    writeMockSolver(home);
    server = spawn(PY, ["-m", "opttune.cli", "serve", "--addr", `127.0.0.1:${PORT}`], { env: { ...process.env, OPTTUNE_HOME: home }, stdio: ["ignore", "pipe", "pipe"] });
    const deadline = Date.now() + 20000;
    for (;;) {
        try {
            const res = await fetch(`${BASE}/api/v1/tasks`);
            if (res.ok)
                break;
        }
        catch {
            if (Date.now() > deadline)
                throw new Error("server did not come up");
            await new Promise((r) => setTimeout(r, 150));
        }
    }
});
after(() => {
    server.kill("SIGTERM");
});
test("five-step workflow with output parity and reload reconstruction", async () => {
    const api = new ApiClient(BASE);
    const controller = new PanelController(api);
    // Step 1+3: name the task, edit the configuration
    const taskId = await controller.createTask("panel e2e", "mock", JSON.stringify({
        "max-distinct-para-combos": 6,
        "max-eval-time": 5,
        "tuning-objective": "time",
        "strategy": "random",
        "concurrency": 2,
        "seed": 3,
    }));
    assert.ok(taskId, controller.view.lastError);
    assert.equal(controller.view.state, "created");
    // Step 2: add a problem file
    const uploaded = await controller.addProblem("instance.mps", new Blob(["* uploaded from the panel\n"]));
    assert.ok(uploaded, controller.view.lastError);
    assert.equal(controller.view.problems.length, 1);
    // Step 4: run; the progress bar reaches 1.0 and output streams in order
    await controller.runToCompletion(100);
    assert.equal(controller.view.state, "finished");
    assert.equal(controller.view.progress, 1.0);
    const serverLog = readFileSync(join(home, "tasks", taskId, "tuner.log"), "utf-8")
        .split("\n").filter((l) => l.length > 0);
    assert.deepEqual(controller.view.outputLines, serverLog);
    // Step 5: recommended parameters and the report views appear
    assert.ok(controller.view.report);
    assert.equal(controller.view.report.distinct_configs, 6);
    const urls = controller.downloadUrls();
    const recommended = await fetch(urls.recommended);
    assert.equal(recommended.status, 200);
    const doc = await recommended.json();
    assert.ok("parameters" in doc);
    const log = await fetch(urls.log);
    assert.equal(log.status, 200);
    // reload: a fresh controller rebuilds everything from the API
    const reloaded = new PanelController(new ApiClient(BASE));
    await reloaded.refreshTaskLists();
    assert.deepEqual(reloaded.view.activeTasks.map((t) => t.task_id), [taskId]);
    await reloaded.selectTask(taskId);
    assert.equal(reloaded.view.state, "finished");
    const poller = reloaded["poller"];
    await poller.pollOnce();
    assert.deepEqual(reloaded.view.outputLines, serverLog);
    await reloaded.loadReport();
    assert.equal(reloaded.view.report.best_config_id, controller.view.report.best_config_id);
});
test("server-side validation errors surface inline", async () => {
    const controller = new PanelController(new ApiClient(BASE));
    const taskId = await controller.createTask("bad config", "mock", '{"max-eval-time": 5, "concurrency": -2}');
    assert.equal(taskId, null);
    assert.ok(controller.view.lastError.includes("concurrency"));
});
test("client-side validation blocks creation before the network", async () => {
    const controller = new PanelController(new ApiClient(BASE));
    const taskId = await controller.createTask("bad", "mock", '{"max-eval-time": 0}');
    assert.equal(taskId, null);
    assert.ok(controller.view.fieldErrors["max-eval-time"]);
    const lists = await new ApiClient(BASE).listTasks("active");
    assert.ok(!lists.tasks.some((t) => t.name === "bad"));
});
