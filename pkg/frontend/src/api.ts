// API client for the viruspkt JSON endpoints.
//
// Every request URL carries exactly one fresh `_cb` cache-buster (a random
// 64-bit decimal) so the browser never replays a cached response. A 401 from
// any call fires the onUnauthorized hook (the app navigates home) and raises
// UnauthorizedError. At most one search request is in flight: submitting a
// new one aborts the pending one.

export interface SearchResult {
  doc_id: string;
  title: string;
  score: number;
  snippet: string;
  source_url: string;
  category: string;
  fetched_at: number;
  duplicates: string[];
}

export interface SearchResponse {
  total: number;
  results: SearchResult[];
}

export interface Community {
  name: string;
  description: string;
  created_by: string;
  members: string[];
}

export interface Scrap {
  id: number;
  from_user: string;
  target: { user?: string; community?: string };
  body: string;
  created_at: number;
}

export class UnauthorizedError extends Error {
  constructor() {
    super("session required");
  }
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message || code);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export function defaultRandomBits(): bigint {
  const words = new Uint32Array(2);
  crypto.getRandomValues(words);
  return (BigInt(words[0]) << 32n) | BigInt(words[1]);
}

export function withCacheBuster(path: string, draw: bigint): string {
  const sep = path.includes("?") ? "&" : "?";
  return `${path}${sep}_cb=${draw.toString(10)}`;
}

export interface ApiClientOptions {
  fetchFn?: FetchLike;
  randomBits?: () => bigint;
  getToken?: () => string | null;
  onUnauthorized?: () => void;
}

export class ApiClient {
  private fetchFn: FetchLike;
  private randomBits: () => bigint;
  private getToken: () => string | null;
  private onUnauthorized: () => void;
  private pendingSearch: AbortController | null = null;

  constructor(options: ApiClientOptions = {}) {
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
    this.randomBits = options.randomBits ?? defaultRandomBits;
    this.getToken = options.getToken ?? (() => null);
    this.onUnauthorized = options.onUnauthorized ?? (() => undefined);
  }

  private async request(method: string, path: string, body?: unknown,
                        signal?: AbortSignal): Promise<Response> {
    const url = withCacheBuster(path, this.randomBits());
    const headers: Record<string, string> = {};
    const token = this.getToken();
    if (token) {
      headers["Authorization"] = `Bearer ${token}`;
    }
    const init: RequestInit = { method, headers, signal };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(url, init);
    if (response.status === 401) {
      this.onUnauthorized();
      throw new UnauthorizedError();
    }
    return response;
  }

  private async json<T>(response: Response): Promise<T> {
    const data = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, data.error ?? "error", data.message ?? "");
    }
    return data as T;
  }

  async login(username: string, password: string): Promise<string> {
    const response = await this.request("POST", "/api/login", { username, password });
    const data = await this.json<{ token: string }>(response);
    return data.token;
  }

  async search(query: string, category: string, limit: number): Promise<SearchResponse> {
    this.pendingSearch?.abort();
    const controller = new AbortController();
    this.pendingSearch = controller;
    const params = new URLSearchParams({ q: query });
    if (category) {
      params.set("category", category);
    }
    params.set("limit", String(limit));
    try {
      const response = await this.request("GET", `/api/search?${params}`, undefined,
                                          controller.signal);
      return await this.json<SearchResponse>(response);
    } finally {
      if (this.pendingSearch === controller) {
        this.pendingSearch = null;
      }
    }
  }

  async document(docId: string): Promise<string> {
    const response = await this.request("GET", `/api/doc/${docId}`);
    if (!response.ok) {
      throw new ApiError(response.status, "not_found", `no document ${docId}`);
    }
    return response.text();
  }

  async communities(): Promise<Community[]> {
    const response = await this.request("GET", "/api/communities");
    const data = await this.json<{ communities: Community[] }>(response);
    return data.communities;
  }

  async createCommunity(name: string, description: string): Promise<void> {
    const response = await this.request("POST", "/api/communities", { name, description });
    await this.json(response);
  }

  async joinCommunity(name: string): Promise<void> {
    const response = await this.request("POST", `/api/communities/${name}/join`);
    await this.json(response);
  }

  async scraps(kind: "user" | "community", name: string): Promise<Scrap[]> {
    const params = new URLSearchParams({ [kind]: name });
    const response = await this.request("GET", `/api/scraps?${params}`);
    const data = await this.json<{ scraps: Scrap[] }>(response);
    return data.scraps;
  }

  async postScrap(target: { to_user?: string; to_community?: string },
                  body: string): Promise<void> {
    const response = await this.request("POST", "/api/scraps", { ...target, body });
    await this.json(response);
  }
}
