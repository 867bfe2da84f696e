import assert from "node:assert/strict";
import { test } from "node:test";

import { guardView, memoryTokenStore, viewFromHash } from "../src/session.js";

test("protected views are blocked without a token", () => {
  assert.equal(guardView("search", false), "home");
  assert.equal(guardView("protkut", false), "home");
  assert.equal(guardView("home", false), "home");
});

test("all views reachable with a token", () => {
  assert.equal(guardView("search", true), "search");
  assert.equal(guardView("protkut", true), "protkut");
  assert.equal(guardView("home", true), "home");
});

test("hash routing maps to views, defaulting home", () => {
  assert.equal(viewFromHash("#/search"), "search");
  assert.equal(viewFromHash("#/protkut"), "protkut");
  assert.equal(viewFromHash("#/"), "home");
  assert.equal(viewFromHash(""), "home");
  assert.equal(viewFromHash("#/bogus"), "home");
});

test("memory token store round trip", () => {
  const store = memoryTokenStore();
  assert.equal(store.get(), null);
  store.set("abc");
  assert.equal(store.get(), "abc");
  store.set(null);
  assert.equal(store.get(), null);
});
