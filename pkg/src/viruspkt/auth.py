"""Users and in-memory sessions.

Passwords are stored as an iterated salted SHA-256 digest (deterministic and
dependency-free; swap in a memory-hard KDF for hostile deployments). Session
tokens live only in memory and expire on idle time with sliding renewal.
"""

from __future__ import annotations

import hashlib
import hmac
import re
import secrets
import threading
from dataclasses import dataclass

from .errors import (
    DuplicateUser,
    EmptyPassword,
    InvalidCredentials,
    InvalidUsername,
    NotAuthenticated,
    SessionExpired,
    UnknownUser,
)

HASH_ITERATIONS = 100_000
SALT_BYTES = 32
DEFAULT_IDLE_TTL = 1800  # seconds

_USERNAME_RE = re.compile(r"^[a-z0-9_]{3,32}$")


@dataclass
class User:
    username: str
    password_digest: bytes
    salt: bytes
    is_admin: bool = False


@dataclass
class Session:
    token: str
    username: str
    created_at: float
    last_seen: float
    idle_ttl_seconds: int = DEFAULT_IDLE_TTL


def hash_password(password: str, salt: bytes) -> bytes:
    """100k chained SHA-256 rounds over (previous || salt || password)."""
    if not password:
        raise EmptyPassword("password must not be empty")
    digest = salt
    suffix = salt + password.encode("utf-8")
    for _ in range(HASH_ITERATIONS):
        digest = hashlib.sha256(digest + suffix).digest()
    return digest


def verify_password(password: str, salt: bytes, expected: bytes) -> bool:
    if not password:
        return False
    return hmac.compare_digest(hash_password(password, salt), expected)


def validate_username(username: str) -> None:
    if not _USERNAME_RE.match(username):
        raise InvalidUsername(
            f"{username!r}: 3-32 chars of lowercase letters, digits, underscore")


def add_user(store, username: str, password: str, is_admin: bool = False) -> User:
    validate_username(username)
    if username in store.users:
        raise DuplicateUser(f"user {username!r} already exists")
    salt = secrets.token_bytes(SALT_BYTES)
    user = User(username=username, password_digest=hash_password(password, salt),
                salt=salt, is_admin=is_admin)
    store.users[username] = user
    store.save_users()
    return user


def set_password(store, username: str, password: str) -> None:
    user = store.users.get(username)
    if user is None:
        raise UnknownUser(f"no user {username!r}")
    salt = secrets.token_bytes(SALT_BYTES)
    user.salt = salt
    user.password_digest = hash_password(password, salt)
    store.save_users()


def remove_user(store, username: str) -> None:
    if username not in store.users:
        raise UnknownUser(f"no user {username!r}")
    del store.users[username]
    store.save_users()


# Decoy credentials hashed on unknown-user logins so both failure causes
# take the same time and return the same error.
_DECOY_SALT = bytes(SALT_BYTES)


class SessionTable:
    """Token -> Session map with atomic check-and-renew."""

    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._mutex = threading.Lock()

    def create(self, username: str, now: float,
               idle_ttl_seconds: int = DEFAULT_IDLE_TTL) -> Session:
        session = Session(
            token=secrets.token_hex(16),
            username=username,
            created_at=now,
            last_seen=now,
            idle_ttl_seconds=idle_ttl_seconds,
        )
        with self._mutex:
            self._sessions[session.token] = session
        return session

    def validate(self, token: str, now: float) -> str:
        """Return the session's username, renewing its idle clock.

        Unknown tokens raise NotAuthenticated; sessions idle past their TTL
        are dropped and raise SessionExpired.
        """
        with self._mutex:
            session = self._sessions.get(token)
            if session is None:
                raise NotAuthenticated("unknown session token")
            if now - session.last_seen > session.idle_ttl_seconds:
                del self._sessions[token]
                raise SessionExpired("session idle past its time limit")
            session.last_seen = now
            return session.username

    def drop(self, token: str) -> None:
        with self._mutex:
            self._sessions.pop(token, None)


def login(store, table: SessionTable, username: str, password: str, now: float,
          idle_ttl_seconds: int = DEFAULT_IDLE_TTL) -> Session:
    """Create a session for matching credentials.

    Unknown user and wrong password are indistinguishable to the caller.
    """
    user = store.users.get(username)
    if user is None:
        if password:
            hash_password(password, _DECOY_SALT)
        raise InvalidCredentials("invalid credentials")
    if not verify_password(password, user.salt, user.password_digest):
        raise InvalidCredentials("invalid credentials")
    return table.create(username, now, idle_ttl_seconds)


def validate_session(table: SessionTable, token: str, now: float) -> str:
    return table.validate(token, now)
