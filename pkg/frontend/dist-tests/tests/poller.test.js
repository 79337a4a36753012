// Cursor-resume contract of the output poller: no gaps, no duplicates, even
// across simulated connectivity failures.
import assert from "node:assert/strict";
import { test } from "node:test";
import { ApiClient, OutputPoller } from "../src/api.js";
function fakeServer(log, failures) {
    let call = 0;
    return (async (input) => {
        const url = String(input);
        call += 1;
        if (failures.has(call)) {
            throw new TypeError("socket hang up");
        }
        const since = Number(new URL(url, "http://x").searchParams.get("since") ?? "0");
        const lines = log.slice(since);
        return new Response(JSON.stringify({ lines, next: since + lines.length }), {
            status: 200,
            headers: { "Content-Type": "application/json" },
        });
    });
}
test("poller accumulates the exact server log", async () => {
    const log = ["l0", "l1", "l2", "l3", "l4"];
    const original = globalThis.fetch;
    globalThis.fetch = fakeServer(log, new Set());
    try {
        const poller = new OutputPoller(new ApiClient("http://x"), "t1");
        await poller.pollOnce();
        log.push("l5", "l6");
        await poller.pollOnce();
        assert.deepEqual(poller.lines, ["l0", "l1", "l2", "l3", "l4", "l5", "l6"]);
        assert.equal(poller.cursor, 7);
    }
    finally {
        globalThis.fetch = original;
    }
});
test("poller survives connectivity loss without losing lines", async () => {
    const log = ["a", "b", "c"];
    const original = globalThis.fetch;
    globalThis.fetch = fakeServer(log, new Set([2, 3])); // calls 2 and 3 fail
    const connectivity = [];
    try {
        const poller = new OutputPoller(new ApiClient("http://x"), "t1", () => { }, (ok) => connectivity.push(ok));
        await poller.pollOnce(); // ok: a b c
        log.push("d");
        await poller.pollOnce(); // network failure
        await poller.pollOnce(); // network failure
        log.push("e");
        await poller.pollOnce(); // recovers, resumes from cursor 3
        assert.deepEqual(poller.lines, ["a", "b", "c", "d", "e"]);
        assert.deepEqual(connectivity, [true, false, false, true]);
    }
    finally {
        globalThis.fetch = original;
    }
});
test("empty chunks never move the cursor", async () => {
    const log = [];
    const original = globalThis.fetch;
    globalThis.fetch = fakeServer(log, new Set());
    try {
        const poller = new OutputPoller(new ApiClient("http://x"), "t1");
        await poller.pollOnce();
        assert.equal(poller.cursor, 0);
        assert.deepEqual(poller.lines, []);
    }
    finally {
        globalThis.fetch = original;
    }
});
