/** Round-trip against the real annotation service: a budget-10 round is
 * hosted by the Python process, this client labels every card through the
 * HTTP API, and the blocked waiter resumes with exactly the submitted set. */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AnnotateClient } from "../src/api.js";

const PY_SERVER = `
import json, sys
from adashift.service import AnnotationService, serve_in_background

service = AnnotationService()
service.set_source_context([[0.0, 0.0, 0], [1.0, 1.0, 1]])
server, _ = serve_in_background(service, port=0)
queries = [{"sample_id": f"q-{i}", "domain": "t1", "round": 0,
            "features": [0.1 * i, -0.2 * i]} for i in range(10)]
service.start_round(domain="t1", round_index=0, queries=queries)
print(json.dumps({"port": server.server_port}), flush=True)
labels = service.wait_complete(timeout=60)
print(json.dumps({"labels": labels}), flush=True)
server.shutdown()
`;

let proc: ChildProcessWithoutNullStreams;
let base = "";
let finalLine: Promise<string>;

beforeAll(async () => {
  proc = spawn("python3", ["-c", PY_SERVER], { cwd: "/tmp" });
  const lines: string[] = [];
  let resolveFinal: (line: string) => void;
  finalLine = new Promise((resolve) => { resolveFinal = resolve; });
  const portReady = new Promise<number>((resolve, reject) => {
    proc.stdout.on("data", (chunk: Buffer) => {
      for (const line of chunk.toString().split("\n")) {
        if (!line.trim()) continue;
        lines.push(line);
        if (lines.length === 1) resolve(JSON.parse(line).port as number);
        if (lines.length === 2) resolveFinal(line);
      }
    });
    proc.stderr.on("data", (chunk: Buffer) => console.error(chunk.toString()));
    proc.on("exit", (code) => {
      if (lines.length === 0) reject(new Error(`python exited early (${code})`));
    });
  });
  const port = await portReady;
  base = `http://127.0.0.1:${port}`;
}, 20_000);

afterAll(() => {
  proc?.kill();
});

describe("browser client against the live service", () => {
  it("labels all ten cards, unblocking the waiter with the submitted set", async () => {
    const client = new AnnotateClient(base);

    const status = await client.status();
    expect(status).not.toBeNull();
    expect(status!.budget).toBe(10);
    expect(status!.pending).toBe(10);

    const context = await client.sourceContext();
    expect(context).toEqual([[0, 0, 0], [1, 1, 1]]);

    const queries = await client.queries();
    expect(queries).toHaveLength(10);

    const submitted: Record<string, 0 | 1> = {};
    for (const [i, q] of queries!.slice(0, 9).entries()) {
      const label = (i % 2) as 0 | 1;
      const result = await client.submit(q.sample_id, label, "roundtrip-test");
      expect(result.kind).toBe("ok");
      submitted[q.sample_id] = label;
    }

    // duplicate submission while the round is still open: the server keeps
    // and reports its stored label, not the new attempt
    const dup = await client.submit("q-0", 1, "roundtrip-test");
    expect(dup).toEqual({ kind: "duplicate", storedLabel: submitted["q-0"] });

    const last = queries![9]!;
    const result = await client.submit(last.sample_id, 1, "roundtrip-test");
    expect(result.kind).toBe("ok");
    submitted[last.sample_id] = 1;

    // the blocked python waiter resumed with exactly the accepted labels
    const committed = JSON.parse(await finalLine).labels as Record<string, 0 | 1>;
    expect(committed).toEqual(submitted);
  }, 30_000);
});
