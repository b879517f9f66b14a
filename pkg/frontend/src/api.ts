// Thin client over the generation service. fetch-based so tests can inject
// a fake transport.

import { SseParser } from "./sse.js";
import type {
  GenerateRequest,
  GenerateResponse,
  LayoutDoc,
  MetricsReport,
  StreamEvent,
} from "./types.js";

export type FetchLike = typeof fetch;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function expectOk(res: Response): Promise<Response> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      // keep statusText
    }
    throw new ApiError(res.status, detail);
  }
  return res;
}

export class Client {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async post(path: string, body: unknown): Promise<Response> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return expectOk(res);
  }

  async health(): Promise<{ ready: boolean }> {
    const res = await expectOk(await this.fetchImpl(`${this.baseUrl}/v1/health`));
    return res.json();
  }

  async modelInfo(): Promise<Record<string, unknown>> {
    const res = await expectOk(await this.fetchImpl(`${this.baseUrl}/v1/model`));
    return res.json();
  }

  async generate(req: GenerateRequest): Promise<GenerateResponse> {
    return (await this.post("/v1/generate", req)).json();
  }

  /** Stream one sample’s denoising trajectory; onEvent fires per SSE event. */
  async generateStream(req: GenerateRequest, onEvent: (ev: StreamEvent) => void): Promise<void> {
    const res = await this.post("/v1/generate/stream", { ...req, num_samples: 1 });
    const body = res.body;
    if (!body) throw new ApiError(0, "response has no body stream");
    const reader = body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const data of parser.push(decoder.decode(value, { stream: true }))) {
        onEvent(JSON.parse(data) as StreamEvent);
      }
    }
    for (const data of parser.push("\n\n")) {
      onEvent(JSON.parse(data) as StreamEvent);
    }
  }

  async refine(body: {
    layout: LayoutDoc;
    strength: number;
    seed?: number;
    canvas_id?: string;
    canvas_png?: string;
    saliency_png?: string;
  }): Promise<GenerateResponse> {
    return (await this.post("/v1/refine", body)).json();
  }

  async evaluate(body: {
    layout: LayoutDoc;
    canvas_id?: string;
    canvas_png?: string;
    saliency_png?: string;
  }): Promise<MetricsReport> {
    return (await this.post("/v1/evaluate", body)).json();
  }
}
