/** Thin typed client over the annotation service's JSON endpoints. All
 * round state lives on the server; this module never caches. */

import type { Label, QueryRecord, RoundStatus, SourcePoint, SubmitResult } from "./types.js";

export class AnnotateClient {
  constructor(private readonly base: string = "") {}

  /** null means "no active round" (404); network failures throw. */
  async status(): Promise<RoundStatus | null> {
    const resp = await fetch(`${this.base}/rounds/current`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`status endpoint returned ${resp.status}`);
    return (await resp.json()) as RoundStatus;
  }

  async queries(): Promise<QueryRecord[] | null> {
    const resp = await fetch(`${this.base}/rounds/current/queries`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`queries endpoint returned ${resp.status}`);
    const body = (await resp.json()) as { queries: QueryRecord[] };
    return body.queries;
  }

  async sourceContext(): Promise<SourcePoint[] | null> {
    const resp = await fetch(`${this.base}/context/source`);
    if (resp.status === 404) return null;
    if (!resp.ok) throw new Error(`context endpoint returned ${resp.status}`);
    const body = (await resp.json()) as { points: SourcePoint[] };
    return body.points;
  }

  /** Maps every server verdict to a typed result; only transport errors
   * become "offline". */
  async submit(sampleId: string, label: Label, annotator: string): Promise<SubmitResult> {
    let resp: Response;
    try {
      resp = await fetch(`${this.base}/labels`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ sample_id: sampleId, label, annotator }),
      });
    } catch {
      return { kind: "offline" };
    }
    const body = (await resp.json()) as Record<string, unknown>;
    if (resp.status === 200) {
      return { kind: "ok", label: body["label"] as Label, pending: body["pending"] as number };
    }
    if (resp.status === 409) {
      return { kind: "duplicate", storedLabel: body["label"] as Label };
    }
    return { kind: "rejected", message: String(body["error"] ?? `HTTP ${resp.status}`) };
  }
}
