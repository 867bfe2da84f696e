// Pure view-model builders: API payloads in, render-ready rows out.
// No DOM access here, so the ordering rules are unit-testable in Node.

import { Community, Scrap, SearchResponse } from "./api.js";

export interface ResultRow {
  docId: string;
  title: string;
  snippet: string;
  score: string;
  category: string;
  duplicateCount: number;
}

// Rows come out in exactly the API's order: the server already ranked them.
export function resultRows(response: SearchResponse): ResultRow[] {
  return response.results.map((result) => ({
    docId: result.doc_id,
    title: result.title || "(untitled)",
    snippet: result.snippet,
    score: result.score.toFixed(3),
    category: result.category,
    duplicateCount: result.duplicates.length,
  }));
}

export interface ScrapRow {
  id: number;
  author: string;
  body: string;
  when: string;
}

export function scrapRows(scraps: Scrap[]): ScrapRow[] {
  return scraps.map((scrap) => ({
    id: scrap.id,
    author: scrap.from_user,
    body: scrap.body,
    when: new Date(scrap.created_at * 1000).toISOString().slice(0, 16).replace("T", " "),
  }));
}

export interface CommunityRow {
  name: string;
  description: string;
  memberCount: number;
  joined: boolean;
}

export function communityRows(communities: Community[], username: string): CommunityRow[] {
  return communities.map((community) => ({
    name: community.name,
    description: community.description,
    memberCount: community.members.length,
    joined: community.members.includes(username),
  }));
}

const INLINE_MESSAGES: Record<string, string> = {
  not_a_member: "Join this community before posting to it.",
  body_too_long: "That scrap is over the 2000 character limit.",
  empty_body: "Write something first.",
  duplicate_name: "A community with that name already exists.",
  invalid_name: "Community names are 3-48 lowercase letters, digits, or underscores.",
  empty_query: "Type a search query first.",
  unknown_category: "Unknown category.",
  invalid_credentials: "Wrong username or password.",
};

export function inlineMessage(code: string, fallback: string): string {
  return INLINE_MESSAGES[code] ?? fallback ?? code;
}
