// Browser wiring: hash router + DOM rendering over the pure modules.
import { ApiClient, ApiError, UnauthorizedError } from "./api.js";
import { browserTokenStore, guardView, viewFromHash } from "./session.js";
import { communityRows, inlineMessage, resultRows, scrapRows } from "./views.js";
const tokens = browserTokenStore();
function navigate(view) {
    window.location.hash = view === "home" ? "#/" : `#/${view}`;
}
const api = new ApiClient({
    getToken: () => tokens.get(),
    onUnauthorized: () => {
        // expired or missing session: back to the home/login view
        tokens.set(null);
        navigate("home");
        render();
    },
});
function el(id) {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function setText(id, text) {
    el(id).textContent = text;
}
function show(view) {
    for (const section of ["home", "search", "protkut"]) {
        el(`view-${section}`).hidden = section !== view;
    }
    document.querySelectorAll("nav a").forEach((a) => {
        a.classList.toggle("active", a.getAttribute("data-view") === view);
    });
    el("nav-bar").hidden = tokens.get() === null;
}
function render() {
    const requested = viewFromHash(window.location.hash);
    const allowed = guardView(requested, tokens.get() !== null);
    if (allowed !== requested) {
        navigate(allowed);
    }
    show(allowed);
    if (allowed === "protkut") {
        void refreshCommunities();
    }
}
// --- login ------------------------------------------------------------------
async function onLogin(event) {
    event.preventDefault();
    const username = el("login-user").value.trim();
    const password = el("login-pass").value;
    setText("login-error", "");
    try {
        tokens.set(await api.login(username, password));
        navigate("search");
        render();
    }
    catch (error) {
        if (error instanceof ApiError) {
            setText("login-error", inlineMessage(error.code, error.message));
        }
        else if (!(error instanceof UnauthorizedError)) {
            setText("login-error", "Could not reach the server.");
        }
    }
}
// --- search -------------------------------------------------------------------
async function onSearch(event) {
    event.preventDefault();
    const query = el("search-input").value;
    const category = el("search-category").value;
    setText("search-error", "");
    let response;
    try {
        response = await api.search(query, category, 25);
    }
    catch (error) {
        if (error instanceof ApiError) {
            setText("search-error", inlineMessage(error.code, error.message));
        }
        else if (error.name === "AbortError") {
            return; // superseded by a newer submission
        }
        return;
    }
    const list = el("search-results");
    list.innerHTML = "";
    setText("search-total", `${response.total} match${response.total === 1 ? "" : "es"}`);
    for (const row of resultRows(response)) {
        const item = document.createElement("li");
        item.className = "result";
        const title = document.createElement("a");
        title.href = "#/search";
        title.className = "result-title";
        title.textContent = row.title;
        title.addEventListener("click", (clickEvent) => {
            clickEvent.preventDefault();
            void openReader(row.docId, row.title);
        });
        const meta = document.createElement("div");
        meta.className = "result-meta";
        const badge = document.createElement("span");
        badge.className = `badge badge-${row.category}`;
        badge.textContent = row.category;
        meta.append(badge, ` score ${row.score}`);
        if (row.duplicateCount > 0) {
            meta.append(` · ${row.duplicateCount} duplicate${row.duplicateCount === 1 ? "" : "s"} folded`);
        }
        const snippet = document.createElement("p");
        snippet.className = "result-snippet";
        snippet.textContent = row.snippet;
        item.append(title, meta, snippet);
        list.append(item);
    }
}
async function openReader(docId, title) {
    try {
        const text = await api.document(docId);
        setText("reader-title", title);
        setText("reader-body", text);
        el("reader").hidden = false;
    }
    catch (error) {
        if (error instanceof ApiError) {
            setText("search-error", error.message);
        }
    }
}
// --- protkut ---------------------------------------------------------------------
let currentUser = "";
async function refreshCommunities() {
    let communities;
    try {
        communities = await api.communities();
    }
    catch {
        return;
    }
    const list = el("community-list");
    list.innerHTML = "";
    for (const row of communityRows(communities, currentUser)) {
        const item = document.createElement("li");
        const name = document.createElement("strong");
        name.textContent = row.name;
        item.append(name, ` — ${row.description || "no description"} (${row.memberCount} member${row.memberCount === 1 ? "" : "s"}) `);
        const join = document.createElement("button");
        join.textContent = row.joined ? "joined" : "join";
        join.addEventListener("click", () => {
            void api.joinCommunity(row.name).then(refreshCommunities).catch(() => undefined);
        });
        const view = document.createElement("button");
        view.textContent = "scrapbook";
        view.addEventListener("click", () => {
            el("scrap-target").value = row.name;
            el("scrap-kind").value = "community";
            void refreshScrapbook();
        });
        item.append(join, " ", view);
        list.append(item);
    }
}
async function onCreateCommunity(event) {
    event.preventDefault();
    setText("protkut-error", "");
    const name = el("community-name").value.trim();
    const description = el("community-description").value;
    try {
        await api.createCommunity(name, description);
        el("community-name").value = "";
        el("community-description").value = "";
        await refreshCommunities();
    }
    catch (error) {
        if (error instanceof ApiError) {
            setText("protkut-error", inlineMessage(error.code, error.message));
        }
    }
}
async function refreshScrapbook() {
    const kind = el("scrap-kind").value;
    const target = el("scrap-target").value.trim();
    if (!target) {
        return;
    }
    setText("protkut-error", "");
    let scraps;
    try {
        scraps = await api.scraps(kind, target);
    }
    catch (error) {
        if (error instanceof ApiError) {
            setText("protkut-error", inlineMessage(error.code, error.message));
        }
        return;
    }
    setText("scrapbook-title", `Scrapbook: ${kind} ${target}`);
    const list = el("scrap-list");
    list.innerHTML = "";
    for (const row of scrapRows(scraps)) {
        const item = document.createElement("li");
        const head = document.createElement("span");
        head.className = "scrap-head";
        head.textContent = `${row.author} · ${row.when}`;
        const body = document.createElement("p");
        body.textContent = row.body;
        item.append(head, body);
        list.append(item);
    }
}
async function onPostScrap(event) {
    event.preventDefault();
    const kind = el("scrap-kind").value;
    const target = el("scrap-target").value.trim();
    const body = el("scrap-body").value;
    setText("protkut-error", "");
    try {
        await api.postScrap(kind === "user" ? { to_user: target } : { to_community: target }, body);
        el("scrap-body").value = "";
        await refreshScrapbook(); // posting refreshes the list
    }
    catch (error) {
        if (error instanceof ApiError) {
            setText("protkut-error", inlineMessage(error.code, error.message));
        }
    }
}
// --- boot -------------------------------------------------------------------------
window.addEventListener("hashchange", render);
window.addEventListener("DOMContentLoaded", () => {
    el("login-form").addEventListener("submit", (e) => {
        currentUser = el("login-user").value.trim();
        void onLogin(e);
    });
    el("search-form").addEventListener("submit", (e) => void onSearch(e));
    el("community-form").addEventListener("submit", (e) => void onCreateCommunity(e));
    el("scrap-form").addEventListener("submit", (e) => void onPostScrap(e));
    el("scrapbook-form").addEventListener("submit", (e) => {
        e.preventDefault();
        void refreshScrapbook();
    });
    el("reader-close").addEventListener("click", () => {
        el("reader").hidden = true;
    });
    render();
});
