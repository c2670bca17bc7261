import type {
  CandidatesPayload,
  ChoiceResult,
  CreateSessionRequest,
  HistoryPayload,
  ItemListPayload,
  ItemPayload,
  MetaPayload,
  RankPayload,
  SessionPayload,
} from "./types.js";

const API = "/api/v1";

/** Server rejected the request; `detail` carries its message. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

/** Stale or duplicate step submission (HTTP 409). */
export class ConflictError extends ApiError {}

/** The request never reached the server or the connection dropped. */
export class NetworkError extends Error {
  constructor(public readonly cause_: unknown) {
    super("network failure");
  }
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (typeof body?.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return resp.statusText || `HTTP ${resp.status}`;
  }
}

export class Client {
  constructor(
    private readonly base = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(`${this.base}${API}${path}`, init);
    } catch (e) {
      throw new NetworkError(e);
    }
    if (!resp.ok) {
      const detail = await detailOf(resp);
      if (resp.status === 409) throw new ConflictError(resp.status, detail);
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  meta(): Promise<MetaPayload> {
    return this.request("/meta");
  }

  items(
    filters: Record<string, string> = {},
    limit = 60,
    offset = 0,
  ): Promise<ItemListPayload> {
    const params = new URLSearchParams({
      limit: String(limit),
      offset: String(offset),
      ...filters,
    });
    return this.request(`/items?${params}`);
  }

  item(id: string): Promise<ItemPayload> {
    return this.request(`/items/${encodeURIComponent(id)}`);
  }

  createSession(req: CreateSessionRequest): Promise<SessionPayload> {
    return this.post("/sessions", req);
  }

  session(id: string): Promise<SessionPayload> {
    return this.request(`/sessions/${encodeURIComponent(id)}`);
  }

  candidates(id: string): Promise<CandidatesPayload> {
    return this.request(`/sessions/${encodeURIComponent(id)}/candidates`);
  }

  postChoice(
    id: string,
    step: number,
    accepted: string[],
    chosen: string | null,
  ): Promise<ChoiceResult> {
    return this.post(`/sessions/${encodeURIComponent(id)}/choice`, {
      step,
      accepted,
      chosen,
    });
  }

  history(id: string): Promise<HistoryPayload> {
    return this.request(`/sessions/${encodeURIComponent(id)}/history`);
  }

  rank(id: string): Promise<RankPayload> {
    return this.request(`/sessions/${encodeURIComponent(id)}/rank`);
  }
}
