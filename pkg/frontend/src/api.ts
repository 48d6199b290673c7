import type { z } from "zod";
import {
  EntitySchemaPayload,
  ErrorResponse,
  EvaluateResponse,
  GoldRecord,
  HealthzResponse,
  PredictResponse,
  SchemaRegisterResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Error raised for non-2xx responses, carrying the server's message verbatim. */
export class ServiceApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceApiError";
  }
}

export interface PredictRequest {
  text: string;
  schema?: EntitySchemaPayload;
  schema_id?: string;
  return_probs?: boolean;
  return_attention?: boolean;
}

export interface EvaluateRequest {
  records?: GoldRecord[];
  dataset_id?: string;
  schema_id?: string;
}

/**
 * Thin client for the /v1 HTTP API.  Responses are shape-checked and then
 * returned as parsed by JSON, without rewriting: the workbench renders the
 * service payload, it never recomputes spans or metrics.
 */
export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    return this.fetchFn(this.baseUrl + path, init);
  }

  private async requestJson<T>(
    shape: z.ZodType<T>,
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const resp = await this.request(method, path, body);
    const raw: unknown = await resp.json();
    if (!resp.ok) {
      const parsed = ErrorResponse.safeParse(raw);
      const message = parsed.success ? parsed.data.error : `HTTP ${resp.status}`;
      throw new ServiceApiError(resp.status, message);
    }
    shape.parse(raw);
    return raw as T;
  }

  healthz(): Promise<HealthzResponse> {
    return this.requestJson(HealthzResponse, "GET", "/healthz");
  }

  predict(req: PredictRequest): Promise<PredictResponse> {
    return this.requestJson(PredictResponse, "POST", "/v1/predict", req);
  }

  evaluate(req: EvaluateRequest): Promise<EvaluateResponse> {
    return this.requestJson(EvaluateResponse, "POST", "/v1/evaluate", req);
  }

  registerSchema(schema: EntitySchemaPayload): Promise<SchemaRegisterResponse> {
    return this.requestJson(SchemaRegisterResponse, "POST", "/v1/schema", schema);
  }

  /** Roll-up CSV for a predict call made with return_attention. */
  async attentionCsv(jobId: string): Promise<string> {
    const resp = await this.request("GET", `/v1/attention/${jobId}`);
    if (!resp.ok) {
      let message = `HTTP ${resp.status}`;
      try {
        const parsed = ErrorResponse.safeParse(await resp.json());
        if (parsed.success) message = parsed.data.error;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ServiceApiError(resp.status, message);
    }
    return resp.text();
  }
}
