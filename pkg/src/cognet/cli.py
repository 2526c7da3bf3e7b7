"""Operator-facing command line: run, validate, digest, serve.

The tool is a thin client of the HTTP service. Without --server it
mounts the app in-process over an ASGI transport, so no daemon or port
is involved; with --server it targets a remote instance serving the
same API. Either way the client owns the filesystem: it reads the
scenario file and writes the CSV set, and nothing is written unless
the run succeeded end to end.

Exit status: 0 on success, 2 on parse/validation failure (including
unreadable scenario files and bad seed values), 3 on an internal
invariant violation.
"""
from __future__ import annotations

import argparse
import asyncio
import os
import sys
from typing import Optional

import httpx

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INTERNAL = 3

SEED_ENV_VAR = "COGNET_SEED"


def _post(server: Optional[str], path: str, payload: dict) -> httpx.Response:
    """One API call, in-process over ASGI unless a server URL is given."""

    async def go() -> httpx.Response:
        if server:
            async with httpx.AsyncClient(
                    base_url=server.rstrip("/"), timeout=600.0) as client:
                return await client.post(path, json=payload)
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
                transport=transport, base_url="http://cognet.local",
                timeout=600.0) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _exit_error(status: int, message: str) -> SystemExit:
    print(message, file=sys.stderr)
    return SystemExit(status)


def _read_scenario(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _exit_error(EXIT_VALIDATION, f"cannot read scenario: {exc}")


def _resolve_seed(flag_value: Optional[int]) -> Optional[int]:
    """Explicit --seed wins; otherwise the COGNET_SEED env var; else None."""
    if flag_value is not None:
        return flag_value
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return None
    try:
        seed = int(raw)
    except ValueError:
        raise _exit_error(
            EXIT_VALIDATION, f"{SEED_ENV_VAR} must be an integer, got {raw!r}")
    if seed < 0:
        raise _exit_error(
            EXIT_VALIDATION, f"{SEED_ENV_VAR} must be >= 0, got {seed}")
    return seed


def _problems_of(resp: httpx.Response) -> tuple[str, list[str]]:
    try:
        detail = resp.json().get("detail", {})
    except ValueError:
        detail = {}
    if isinstance(detail, dict):
        return detail.get("code", ""), list(detail.get("problems", []))
    return "", [str(detail)]


def _fail_from(resp: httpx.Response) -> SystemExit:
    code, problems = _problems_of(resp)
    for p in problems:
        print(p, file=sys.stderr)
    if resp.status_code == 422 or code in ("parse", "validation"):
        return SystemExit(EXIT_VALIDATION)
    if not problems:
        print(f"server error: HTTP {resp.status_code}", file=sys.stderr)
    return SystemExit(EXIT_INTERNAL)


def _cmd_run(args: argparse.Namespace) -> int:
    text = _read_scenario(args.scenario)
    payload: dict = {"scenario_text": text}
    seed = _resolve_seed(args.seed)
    if seed is not None:
        payload["seed"] = seed
    if args.duration is not None:
        payload["duration_s"] = args.duration
    resp = _post(args.server, "/api/run", payload)
    if resp.status_code != 200:
        raise _fail_from(resp)
    body = resp.json()
    os.makedirs(args.out, exist_ok=True)
    for name in sorted(body["files"]):
        path = os.path.join(args.out, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body["files"][name])
    print(f"{body['name']}: wrote {len(body['files'])} files to {args.out}")
    print(f"trace digest {body['digest']}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    text = _read_scenario(args.scenario)
    resp = _post(args.server, "/api/validate", {"scenario_text": text})
    if resp.status_code != 200:
        raise _fail_from(resp)
    body = resp.json()
    if body["valid"]:
        print(f"{body['name']}: ok")
        return EXIT_OK
    for p in body["problems"]:
        print(p, file=sys.stderr)
    return EXIT_VALIDATION


def _cmd_digest(args: argparse.Namespace) -> int:
    text = _read_scenario(args.scenario)
    payload: dict = {"scenario_text": text}
    seed = _resolve_seed(args.seed)
    if seed is not None:
        payload["seed"] = seed
    resp = _post(args.server, "/api/digest", payload)
    if resp.status_code != 200:
        raise _fail_from(resp)
    print(resp.json()["digest"])
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cognet",
        description="Deterministic simulator of SDN-based cognitive networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser(
        "run", help="execute a scenario and write the metrics CSV set")
    p_run.add_argument("scenario", help="path to a .scn scenario file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_run.add_argument("--duration", type=float, default=None, metavar="S",
                       help="override the simulated duration in seconds")
    p_run.add_argument("--server", default=None,
                       help="base URL of a remote service instance")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario without running")
    p_val.add_argument("scenario", help="path to a .scn scenario file")
    p_val.add_argument("--server", default=None,
                       help="base URL of a remote service instance")
    p_val.set_defaults(func=_cmd_validate)

    p_dig = sub.add_parser(
        "digest", help="run without writing files and print the trace digest")
    p_dig.add_argument("scenario", help="path to a .scn scenario file")
    p_dig.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_dig.add_argument("--server", default=None,
                       help="base URL of a remote service instance")
    p_dig.set_defaults(func=_cmd_digest)

    p_srv = sub.add_parser("serve", help="serve the HTTP API")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except httpx.HTTPError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
