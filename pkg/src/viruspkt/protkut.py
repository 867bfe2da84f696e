"""Protkut: communities and scraps (short messages) between users.

Scraps are append-only with store-wide increasing ids; community membership
is required for posting to a community but not for reading.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import (
    BodyTooLong,
    DescriptionTooLong,
    DuplicateName,
    EmptyBody,
    InvalidName,
    NotAMember,
    TargetNotFound,
)

if TYPE_CHECKING:
    from .store import Store

MAX_DESCRIPTION_CHARS = 500
MAX_BODY_CHARS = 2000

_NAME_RE = re.compile(r"^[a-z0-9_]{3,48}$")


@dataclass
class Community:
    name: str
    description: str
    created_by: str
    members: set[str] = field(default_factory=set)


@dataclass
class Scrap:
    id: int
    from_user: str
    target_kind: str  # "user" or "community"
    target_name: str
    body: str
    created_at: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "from_user": self.from_user,
            "target": {self.target_kind: self.target_name},
            "body": self.body,
            "created_at": self.created_at,
        }


def create_community(store: "Store", name: str, description: str, creator: str) -> Community:
    if not _NAME_RE.match(name):
        raise InvalidName(f"{name!r}: 3-48 chars of lowercase letters, digits, underscore")
    if len(description) > MAX_DESCRIPTION_CHARS:
        raise DescriptionTooLong(f"description over {MAX_DESCRIPTION_CHARS} chars")
    if name in store.communities:
        raise DuplicateName(f"community {name!r} already exists")
    community = Community(name=name, description=description,
                          created_by=creator, members={creator})
    store.communities[name] = community
    store.save_communities()
    return community


def join_community(store: "Store", name: str, user: str) -> None:
    """Add user to the community; joining twice is a no-op."""
    community = store.communities.get(name)
    if community is None:
        raise TargetNotFound(f"no community {name!r}")
    if user not in community.members:
        community.members.add(user)
        store.save_communities()


def post_scrap(store: "Store", from_user: str, target_kind: str, target_name: str,
               body: str, now: float) -> Scrap:
    """Append a scrap to a user's or community's board."""
    if target_kind == "user":
        if target_name not in store.users:
            raise TargetNotFound(f"no user {target_name!r}")
    elif target_kind == "community":
        community = store.communities.get(target_name)
        if community is None:
            raise TargetNotFound(f"no community {target_name!r}")
        if from_user not in community.members:
            raise NotAMember(f"{from_user!r} has not joined {target_name!r}")
    else:
        raise ValueError(f"target_kind must be 'user' or 'community', not {target_kind!r}")
    body = body.strip()
    if not body:
        raise EmptyBody("scrap body is empty")
    if len(body) > MAX_BODY_CHARS:
        raise BodyTooLong(f"scrap body over {MAX_BODY_CHARS} chars")
    scrap = Scrap(
        id=store.next_scrap_id,
        from_user=from_user,
        target_kind=target_kind,
        target_name=target_name,
        body=body,
        created_at=int(now),
    )
    store.append_scrap(scrap)
    return scrap


def list_scraps(store: "Store", target_kind: str, target_name: str) -> list[Scrap]:
    """All scraps addressed to the target, newest first."""
    if target_kind == "user":
        if target_name not in store.users:
            raise TargetNotFound(f"no user {target_name!r}")
    elif target_kind == "community":
        if target_name not in store.communities:
            raise TargetNotFound(f"no community {target_name!r}")
    else:
        raise ValueError(f"target_kind must be 'user' or 'community', not {target_kind!r}")
    matches = [s for s in store.scraps
               if s.target_kind == target_kind and s.target_name == target_name]
    matches.sort(key=lambda s: (-s.created_at, -s.id))
    return matches
