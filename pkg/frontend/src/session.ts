// Client session state and the route guard.
//
// The token lives in sessionStorage (cleared when the tab closes). Without a
// token, only the home/login view is reachable; the guard redirects
// everything else there.

export type View = "home" | "search" | "protkut";

export interface TokenStore {
  get(): string | null;
  set(token: string | null): void;
}

export function memoryTokenStore(initial: string | null = null): TokenStore {
  let token = initial;
  return {
    get: () => token,
    set: (value) => {
      token = value;
    },
  };
}

export function browserTokenStore(): TokenStore {
  const key = "viruspkt.session";
  return {
    get: () => sessionStorage.getItem(key),
    set: (value) => {
      if (value === null) {
        sessionStorage.removeItem(key);
      } else {
        sessionStorage.setItem(key, value);
      }
    },
  };
}

const PROTECTED_VIEWS: readonly View[] = ["search", "protkut"];

export function guardView(requested: View, hasToken: boolean): View {
  if (!hasToken && PROTECTED_VIEWS.includes(requested)) {
    return "home";
  }
  return requested;
}

export function viewFromHash(hash: string): View {
  switch (hash.replace(/^#\/?/, "")) {
    case "search":
      return "search";
    case "protkut":
      return "protkut";
    default:
      return "home";
  }
}
