// Client session state and the route guard.
//
// The token lives in sessionStorage (cleared when the tab closes). Without a
// token, only the home/login view is reachable; the guard redirects
// everything else there.
export function memoryTokenStore(initial = null) {
    let token = initial;
    return {
        get: () => token,
        set: (value) => {
            token = value;
        },
    };
}
export function browserTokenStore() {
    const key = "viruspkt.session";
    return {
        get: () => sessionStorage.getItem(key),
        set: (value) => {
            if (value === null) {
                sessionStorage.removeItem(key);
            }
            else {
                sessionStorage.setItem(key, value);
            }
        },
    };
}
const PROTECTED_VIEWS = ["search", "protkut"];
export function guardView(requested, hasToken) {
    if (!hasToken && PROTECTED_VIEWS.includes(requested)) {
        return "home";
    }
    return requested;
}
export function viewFromHash(hash) {
    switch (hash.replace(/^#\/?/, "")) {
        case "search":
            return "search";
        case "protkut":
            return "protkut";
        default:
            return "home";
    }
}
