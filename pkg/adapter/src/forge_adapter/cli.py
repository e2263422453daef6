"""Command line front end: serve a session over stdio, or re-check a transcript."""

from __future__ import annotations

import argparse
import sys

from .drivers import make_driver
from .policy import FetchPolicy, Politeness, compile_blocklist
from .protocol import check_transcript, read_transcript, serve
from .session import AdapterSession


def _add_env_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--driver", choices=("static", "playwright"),
                        default="static", help="page driver (default: static)")
    parser.add_argument("--start-url", metavar="URL",
                        help="fallback target for RESET requests without a url")
    parser.add_argument("--respect-robots", action="store_true",
                        help="refuse fetches disallowed by robots.txt")
    parser.add_argument("--host-delay", type=float, default=0.0, metavar="SECONDS",
                        help="minimum spacing between fetches to one host")
    parser.add_argument("--allow-sensitive", action="store_true",
                        help="drop the built-in payment/login URL blocklist")
    parser.add_argument("--block", action="append", metavar="REGEX",
                        help="extra URL pattern to refuse (repeatable)")
    parser.add_argument("--timeout", type=float, default=10.0, metavar="SECONDS",
                        help="per-fetch timeout")


def build_session(args: argparse.Namespace) -> AdapterSession:
    politeness = Politeness(respect_robots=args.respect_robots,
                            host_delay=args.host_delay)
    blocklist = compile_blocklist(tuple(args.block or ()),
                                  allow_sensitive=args.allow_sensitive)
    policy = FetchPolicy(politeness=politeness, blocklist=blocklist)
    driver = make_driver(args.driver, timeout=args.timeout,
                         user_agent=politeness.user_agent)
    return AdapterSession(driver=driver, policy=policy, start_url=args.start_url)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="forge-adapter",
        description="Serve real web pages over the forge environment wire protocol.")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("serve", help="speak the wire protocol over stdio until EOF")
    _add_env_flags(p)
    p.add_argument("--record", metavar="FILE",
                   help="tee every request/response pair to FILE as JSON lines")

    p = subs.add_parser("check",
                        help="replay a recorded transcript against a fresh session")
    _add_env_flags(p)
    p.add_argument("transcript", metavar="FILE")

    args = parser.parse_args(argv)

    if args.subcommand == "serve":
        session = build_session(args)
        record = open(args.record, "w", encoding="utf-8") if args.record else None
        try:
            serve(session, sys.stdin, sys.stdout, record=record)
        finally:
            if record is not None:
                record.close()
            session.close()
        return 0

    with open(args.transcript, encoding="utf-8") as fh:
        records = read_transcript(fh)
    results = check_transcript(lambda: build_session(args), records)
    for label, ok, detail in results:
        print(f"PASS {label}" if ok else f"FAIL {label}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 2
