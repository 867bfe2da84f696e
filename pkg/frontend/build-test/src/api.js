// API client for the viruspkt JSON endpoints.
//
// Every request URL carries exactly one fresh `_cb` cache-buster (a random
// 64-bit decimal) so the browser never replays a cached response. A 401 from
// any call fires the onUnauthorized hook (the app navigates home) and raises
// UnauthorizedError. At most one search request is in flight: submitting a
// new one aborts the pending one.
export class UnauthorizedError extends Error {
    constructor() {
        super("session required");
    }
}
export class ApiError extends Error {
    constructor(status, code, message) {
        super(message || code);
        this.status = status;
        this.code = code;
    }
}
export function defaultRandomBits() {
    const words = new Uint32Array(2);
    crypto.getRandomValues(words);
    return (BigInt(words[0]) << 32n) | BigInt(words[1]);
}
export function withCacheBuster(path, draw) {
    const sep = path.includes("?") ? "&" : "?";
    return `${path}${sep}_cb=${draw.toString(10)}`;
}
export class ApiClient {
    constructor(options = {}) {
        this.pendingSearch = null;
        this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
        this.randomBits = options.randomBits ?? defaultRandomBits;
        this.getToken = options.getToken ?? (() => null);
        this.onUnauthorized = options.onUnauthorized ?? (() => undefined);
    }
    async request(method, path, body, signal) {
        const url = withCacheBuster(path, this.randomBits());
        const headers = {};
        const token = this.getToken();
        if (token) {
            headers["Authorization"] = `Bearer ${token}`;
        }
        const init = { method, headers, signal };
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
    async json(response) {
        const data = await response.json();
        if (!response.ok) {
            throw new ApiError(response.status, data.error ?? "error", data.message ?? "");
        }
        return data;
    }
    async login(username, password) {
        const response = await this.request("POST", "/api/login", { username, password });
        const data = await this.json(response);
        return data.token;
    }
    async search(query, category, limit) {
        this.pendingSearch?.abort();
        const controller = new AbortController();
        this.pendingSearch = controller;
        const params = new URLSearchParams({ q: query });
        if (category) {
            params.set("category", category);
        }
        params.set("limit", String(limit));
        try {
            const response = await this.request("GET", `/api/search?${params}`, undefined, controller.signal);
            return await this.json(response);
        }
        finally {
            if (this.pendingSearch === controller) {
                this.pendingSearch = null;
            }
        }
    }
    async document(docId) {
        const response = await this.request("GET", `/api/doc/${docId}`);
        if (!response.ok) {
            throw new ApiError(response.status, "not_found", `no document ${docId}`);
        }
        return response.text();
    }
    async communities() {
        const response = await this.request("GET", "/api/communities");
        const data = await this.json(response);
        return data.communities;
    }
    async createCommunity(name, description) {
        const response = await this.request("POST", "/api/communities", { name, description });
        await this.json(response);
    }
    async joinCommunity(name) {
        const response = await this.request("POST", `/api/communities/${name}/join`);
        await this.json(response);
    }
    async scraps(kind, name) {
        const params = new URLSearchParams({ [kind]: name });
        const response = await this.request("GET", `/api/scraps?${params}`);
        const data = await this.json(response);
        return data.scraps;
    }
    async postScrap(target, body) {
        const response = await this.request("POST", "/api/scraps", { ...target, body });
        await this.json(response);
    }
}
