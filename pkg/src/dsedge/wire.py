"""Multipart/form-data encode and decode for snapshot uploads.

Decoding rides on the stdlib email parser; encoding builds the body by
hand so the harness can produce byte-stable payloads.
"""

from __future__ import annotations

import secrets
from email.parser import BytesParser
from email.policy import HTTP


class MultipartError(ValueError):
    pass


def parse_multipart(body: bytes, content_type: str) -> dict[str, bytes]:
    """Decode a multipart/form-data body into {part name: raw bytes}."""
    if not content_type or "multipart/form-data" not in content_type.lower():
        raise MultipartError("content type is not multipart/form-data")
    header = b"Content-Type: " + content_type.encode("ascii", "replace") + b"\r\n\r\n"
    msg = BytesParser(policy=HTTP).parsebytes(header + body)
    if not msg.is_multipart():
        raise MultipartError("body is not well-formed multipart")
    parts: dict[str, bytes] = {}
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name is None:
            continue
        payload = part.get_payload(decode=True)
        parts[str(name)] = payload if payload is not None else b""
    return parts


def encode_multipart(
    parts: dict[str, bytes], boundary: str | None = None
) -> tuple[bytes, str]:
    """Encode named parts; returns (body, content-type header value)."""
    if boundary is None:
        boundary = "dsedge-" + secrets.token_hex(12)
    out = bytearray()
    for name, payload in parts.items():
        out += b"--" + boundary.encode("ascii") + b"\r\n"
        disposition = f'Content-Disposition: form-data; name="{name}"'
        if name == "image":
            disposition += '; filename="snapshot.png"'
        out += disposition.encode("ascii") + b"\r\n"
        if name == "image":
            out += b"Content-Type: image/png\r\n"
        out += b"\r\n"
        out += payload
        out += b"\r\n"
    out += b"--" + boundary.encode("ascii") + b"--\r\n"
    return bytes(out), f"multipart/form-data; boundary={boundary}"
