"""One front door for the whole pipeline: `forge <subcommand> ...`.

Every invocation leaves an audit trail under --runs-dir: a run directory
named <stamp>-<subcommand> holding run.json (the fully resolved parameters)
and transcript.jsonl (every model request/response made during the run).
Exit codes: 0 done, 1 bad usage, 2 the pipeline itself failed.
"""
import argparse
import itertools
import json
import shlex
import subprocess
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from webforge.a11y import A11yError, count_interactables, parse_a11y_text
from webforge.actions import ActionError
from webforge.bench import (aggregate, build_bench, read_cases, read_results,
                            run_bench, wm_predictor, write_cases, write_results)
from webforge.collector import CollectionPlan, Strategy, collect
from webforge.environment import (EnvClient, EnvError, MockEnv, ProtocolError,
                                  load_site_graph, run_conformance, serve)
from webforge.filtering import (filter_trajectories, filter_urls_llm,
                                filter_urls_rules, load_blocklist)
from webforge.gateway import (GatewayError, GatewayHandle, HttpConfig,
                              HttpProvider, ReplayProvider, Role,
                              ScriptedProvider, Transcript)
from webforge.search import (Algorithm, GraphAgent, GraphWorldModel, LlmAgent,
                             LlmValueModel, LlmWorldModel, OracleValueModel,
                             Scoring, SearchConfig, SimFormat, run_episode)
from webforge.synthesis import SynthConfig, SynthSeed, synthesize_batch
from webforge.trajectory import (SchemaError, SourceLevel, corpus_stats,
                                 read_jsonl, write_jsonl)
from webforge.transpile import TargetFormat, transpile

_PIPELINE_ERRORS = (OSError, ValueError, KeyError, A11yError, ActionError,
                    SchemaError, EnvError, GatewayError, ProtocolError,
                    subprocess.SubprocessError)

_TRANSPILE_FMTS = ("xml", "html", "md", "locator")  # nl needs a narrator model
_LEVELS = {1: SourceLevel.L1_RANDOM, 2: SourceLevel.L2_AUTONOMOUS,
           3: SourceLevel.L3_TASK}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so run() owns the exit code."""

    def error(self, message):
        raise UsageError(message)


# --- run-directory bookkeeping ------------------------------------------------------


def _new_run_dir(runs_dir: Path, slug: str) -> Path:
    runs_dir.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    for n in itertools.count():
        suffix = f"-{n}" if n else ""
        candidate = runs_dir / f"{stamp}{suffix}-{slug}"
        try:
            candidate.mkdir()
        except FileExistsError:
            continue
        return candidate


class _RunContext:
    """Per-invocation state: the run directory and one shared transcript."""

    def __init__(self, run_dir: Path):
        self.run_dir = run_dir
        self.transcript = Transcript()
        self._providers: dict = {}
        self._pipes: list = []

    def gateway(self, provider_path, role: Role) -> GatewayHandle:
        key = str(provider_path)
        if key not in self._providers:
            self._providers[key] = _build_provider(Path(provider_path))
        provider = self._providers[key]
        # scripted/replay traffic carries no real latency worth recording
        clock = None if isinstance(provider, HttpProvider) else (lambda: 0.0)
        return GatewayHandle(provider, role, transcript=self.transcript,
                             clock=clock)

    def write_report(self, obj) -> None:
        text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
        (self.run_dir / "report.json").write_text(text, encoding="utf-8")

    def track_pipe(self, pipe) -> None:
        self._pipes.append(pipe)

    def close(self) -> None:
        for pipe in self._pipes:
            pipe.close()
        self._pipes.clear()


def _build_provider(path: Path):
    obj = json.loads(path.read_text(encoding="utf-8"))
    kind = obj.get("provider")
    if kind == "scripted":
        return ScriptedProvider(queue=obj.get("queue"), table=obj.get("table"),
                                default=obj.get("default"))
    if kind == "replay":
        records = Transcript.read_jsonl(obj["path"]).records
        return ReplayProvider(records, strict=obj.get("strict", True))
    if kind == "http":
        keys = ("endpoint", "model", "key_env", "temperature", "max_tokens",
                "timeout")
        return HttpProvider(HttpConfig(**{k: obj[k] for k in keys if k in obj}))
    raise ValueError(f"unknown provider kind: {kind!r}")


class _PipeEnv:
    """Environment reached over a child process speaking the NDJSON dialect."""

    def __init__(self, argv: list):
        self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                      stdout=subprocess.PIPE, text=True,
                                      bufsize=1)
        self._client = EnvClient.over_streams(self._proc.stdin,
                                              self._proc.stdout)

    def reset(self, url: Optional[str] = None):
        return self._client.reset(url)

    def step(self, action):
        return self._client.step(action)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


def _env_factory(params: dict, ctx: _RunContext):
    if params.get("graph"):
        graph = load_site_graph(params["graph"])
        return lambda: MockEnv(graph)
    argv = shlex.split(params["env_cmd"])

    def factory():
        pipe = _PipeEnv(argv)
        ctx.track_pipe(pipe)
        return pipe

    return factory


# --- parameter resolution -----------------------------------------------------------


def _resolve(args, config: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, config.get(key.rstrip("_"), default))
    return value


def _require(params: dict, *keys: str):
    missing = [k for k in keys if params.get(k) in (None, "")]
    if missing:
        flags = ", ".join("--" + k.rstrip("_").replace("_", "-") for k in missing)
        raise UsageError(f"missing required: {flags}")


def _one_backend(params: dict):
    if bool(params.get("graph")) == bool(params.get("env_cmd")):
        raise UsageError("give exactly one of --graph or --env-cmd")


def _read_lines(path) -> list:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out


def _read_jsonl_objs(path) -> list:
    return [json.loads(line) for line in _read_lines(path)]


# --- subcommands --------------------------------------------------------------------


def _resolve_parse(args, config):
    return {"file": str(args.file)}


def _run_parse(params, ctx):
    tree = parse_a11y_text(Path(params["file"]).read_text(encoding="utf-8"))
    nodes = sum(1 for _ in tree.walk())
    interactables = sum(count_interactables(tree).values())
    print(f"roots={len(tree.roots)} nodes={nodes} interactables={interactables}")


def _resolve_transpile(args, config):
    params = {"file": str(args.file), "fmt": _resolve(args, config, "fmt")}
    _require(params, "fmt")
    return params


def _run_transpile(params, ctx):
    tree = parse_a11y_text(Path(params["file"]).read_text(encoding="utf-8"))
    out = transpile(tree, TargetFormat(params["fmt"]))
    sys.stdout.write(out if out.endswith("\n") else out + "\n")


def _resolve_traj_stats(args, config):
    return {"file": str(args.file)}


def _run_traj_stats(params, ctx):
    stats = corpus_stats(read_jsonl(params["file"]))
    print(json.dumps(stats, indent=2, sort_keys=True))


def _resolve_serve_mock(args, config):
    return {"graph": str(args.graph)}


def _run_serve_mock(params, ctx):
    env = MockEnv(load_site_graph(params["graph"]))
    serve(env, sys.stdin, sys.stdout)


def _resolve_conformance(args, config):
    params = {"cmd": _resolve(args, config, "cmd"),
              "reset_url": _resolve(args, config, "reset_url")}
    _require(params, "cmd")
    return params


def _run_conformance_cmd(params, ctx):
    proc = subprocess.Popen(shlex.split(params["cmd"]), stdin=subprocess.PIPE,
                            stdout=subprocess.PIPE, text=True, bufsize=1)

    def send(request: dict) -> dict:
        proc.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            return {}
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            return {}

    try:
        results = run_conformance(send, reset_url=params.get("reset_url"))
    finally:
        if proc.poll() is None:
            proc.stdin.close()
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
    for res in results:
        print(f"PASS {res.name}" if res.ok else f"FAIL {res.name}: {res.detail}")
    return 0 if all(res.ok for res in results) else 2


def _resolve_collect(args, config):
    params = {
        "level": _resolve(args, config, "level"),
        "urls": _resolve(args, config, "urls"),
        "out": _resolve(args, config, "out"),
        "graph": _resolve(args, config, "graph"),
        "env_cmd": _resolve(args, config, "env_cmd"),
        "provider": _resolve(args, config, "provider"),
        "strategy": _resolve(args, config, "strategy"),
        "seed": _resolve(args, config, "seed", 0),
        "workers": _resolve(args, config, "workers", 1),
        "min_steps": _resolve(args, config, "min_steps"),
        "max_steps": _resolve(args, config, "max_steps"),
        "l3_seeds": _resolve(args, config, "l3_seeds"),
        "l3_variants": _resolve(args, config, "l3_variants"),
        "l3_paraphrases": _resolve(args, config, "l3_paraphrases"),
        "weights": config.get("weights"),
    }
    _require(params, "level", "urls", "out")
    if params["level"] not in _LEVELS:
        raise UsageError(f"--level must be one of {sorted(_LEVELS)}")
    _one_backend(params)
    if params["level"] != 1 and not params["provider"]:
        raise UsageError("levels 2 and 3 need --provider for the acting model")
    return params


def _run_collect(params, ctx):
    kwargs = dict(level=_LEVELS[params["level"]],
                  url_list=_read_lines(params["urls"]),
                  parallelism=params["workers"], rng_seed=params["seed"])
    if params["strategy"]:
        kwargs["strategy"] = Strategy(params["strategy"])
    for key in ("min_steps", "max_steps", "l3_seeds", "l3_variants",
                "l3_paraphrases"):
        if params[key] is not None:
            kwargs[key] = params[key]
    plan = CollectionPlan(**kwargs)
    gateway = (ctx.gateway(params["provider"], Role.AGENT)
               if params["provider"] else None)
    try:
        trajs, report = collect(plan, _env_factory(params, ctx), gateway,
                                weights=params.get("weights"))
    finally:
        ctx.close()
    write_jsonl(trajs, params["out"])
    ctx.write_report(report.to_obj())
    print(f"collected {len(trajs)} trajectories from {report.sites} sites "
          f"({len(report.errors)} errors)")


def _resolve_filter_urls(args, config):
    params = {
        "input": _resolve(args, config, "in_"),
        "out": _resolve(args, config, "out"),
        "report": _resolve(args, config, "report"),
        "graph": _resolve(args, config, "graph"),
        "provider": _resolve(args, config, "provider"),
        "blocklist": _resolve(args, config, "blocklist"),
    }
    _require(params, "input", "out")
    return params


def _run_filter_urls(params, ctx):
    urls, titles = [], {}
    for line in _read_lines(params["input"]):
        url, _, title = line.partition("\t")
        urls.append(url)
        if title:
            titles[url] = title
    graph_env = (MockEnv(load_site_graph(params["graph"]))
                 if params["graph"] else None)

    def probe(url: str) -> Optional[str]:
        if url in titles:
            return titles[url]
        if graph_env is not None:
            try:
                return graph_env.reset(url).a11y
            except EnvError:
                return None
        return None

    terms = (load_blocklist(Path(params["blocklist"]))
             if params["blocklist"] else None)
    survivors, rules_report = filter_urls_rules(urls, probe, blocklist=terms)
    report_obj = {"rules": rules_report.to_obj()}
    if params["provider"]:
        gw = ctx.gateway(params["provider"], Role.VALUE_JUDGE)
        pages = [(url, probe(url)) for url in survivors]
        survivors, llm_report = filter_urls_llm(pages, gw)
        report_obj["llm"] = llm_report.to_obj()
    Path(params["out"]).write_text("".join(u + "\n" for u in survivors),
                                   encoding="utf-8")
    ctx.write_report(report_obj)
    if params["report"]:
        Path(params["report"]).write_text(
            json.dumps(report_obj, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    print(f"kept {len(survivors)}/{len(urls)} urls")


def _resolve_filter_traj(args, config):
    params = {
        "input": _resolve(args, config, "in_"),
        "out": _resolve(args, config, "out"),
        "report": _resolve(args, config, "report"),
        "blocklist": _resolve(args, config, "blocklist"),
        "token_cap": _resolve(args, config, "token_cap"),
        "turn_cap": _resolve(args, config, "turn_cap"),
    }
    _require(params, "input", "out")
    return params


def _run_filter_traj(params, ctx):
    kwargs = {}
    if params["blocklist"]:
        kwargs["blocklist"] = load_blocklist(Path(params["blocklist"]))
    for key in ("token_cap", "turn_cap"):
        if params[key] is not None:
            kwargs[key] = params[key]
    trajs = read_jsonl(params["input"])
    survivors, report = filter_trajectories(trajs, **kwargs)
    write_jsonl(survivors, params["out"])
    report_obj = {"trajectories": report.to_obj()}
    ctx.write_report(report_obj)
    if params["report"]:
        Path(params["report"]).write_text(
            json.dumps(report_obj, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    print(f"kept {len(survivors)}/{len(trajs)} trajectories")


def _resolve_search(args, config):
    params = {
        "graph": _resolve(args, config, "graph"),
        "episodes": _resolve(args, config, "episodes"),
        "out": _resolve(args, config, "out"),
        "algo": _resolve(args, config, "algo", "bon"),
        "k": _resolve(args, config, "k"),
        "scoring": _resolve(args, config, "scoring"),
        "sim_format": _resolve(args, config, "sim_format"),
        "agent": _resolve(args, config, "agent", "graph"),
        "wm": _resolve(args, config, "wm", "graph"),
        "value": _resolve(args, config, "value", "oracle"),
        "provider": _resolve(args, config, "provider"),
        "max_steps": _resolve(args, config, "max_steps"),
        "max_depth": _resolve(args, config, "max_depth"),
        "rollouts": _resolve(args, config, "rollouts"),
        "uct_c": _resolve(args, config, "uct_c"),
        "seed": _resolve(args, config, "seed", 0),
    }
    _require(params, "graph", "episodes", "out")
    if "llm" in (params["agent"], params["wm"], params["value"]) \
            and not params["provider"]:
        raise UsageError("llm-backed components need --provider")
    return params


def _run_search(params, ctx):
    graph = load_site_graph(params["graph"])
    episodes = _read_jsonl_objs(params["episodes"])
    if params["agent"] == "llm":
        agent = LlmAgent(ctx.gateway(params["provider"], Role.AGENT))
    else:
        agent = GraphAgent(graph)
    if params["wm"] == "llm":
        wm = LlmWorldModel(ctx.gateway(params["provider"], Role.WORLD_MODEL))
    else:
        wm = GraphWorldModel(graph)
    if params["value"] == "llm":
        value = LlmValueModel(ctx.gateway(params["provider"], Role.VALUE_JUDGE))
    else:
        value = OracleValueModel(graph)
    kwargs = {"algorithm": Algorithm(params["algo"]),
              "rng_seed": params["seed"]}
    if params["k"] is not None:
        kwargs["k"] = params["k"]
    if params["scoring"]:
        kwargs["scoring"] = Scoring(params["scoring"])
    if params["sim_format"]:
        kwargs["sim_format"] = SimFormat(params["sim_format"])
    for key in ("max_steps", "max_depth", "rollouts", "uct_c"):
        if params[key] is not None:
            kwargs[key] = params[key]
    config = SearchConfig(**kwargs)
    successes = 0
    with open(params["out"], "w", encoding="utf-8") as fh:
        for obj in episodes:
            episode = run_episode(agent, wm, value, MockEnv(graph),
                                  obj["goal"], config, url=obj.get("url"))
            successes += bool(episode.success)
            fh.write(json.dumps(episode.to_obj(), sort_keys=True) + "\n")
    print(f"{successes}/{len(episodes)} episodes succeeded")


def _resolve_bench_build(args, config):
    params = {
        "input": _resolve(args, config, "in_"),
        "out": _resolve(args, config, "out"),
        "provider": _resolve(args, config, "provider"),
        "seed": _resolve(args, config, "seed", 0),
        "fine_grained_threshold": _resolve(args, config,
                                           "fine_grained_threshold"),
    }
    _require(params, "input", "out")
    return params


def _run_bench_build(params, ctx):
    trajs = read_jsonl(params["input"])
    gateway = (ctx.gateway(params["provider"], Role.SYNTH)
               if params["provider"] else None)
    kwargs = {}
    if params["fine_grained_threshold"] is not None:
        kwargs["fine_grained_threshold"] = params["fine_grained_threshold"]
    cases = build_bench(trajs, gateway=gateway, rng_seed=params["seed"],
                        **kwargs)
    write_cases(cases, params["out"])
    print(f"built {len(cases)} cases")


def _resolve_bench_run(args, config):
    params = {
        "cases": _resolve(args, config, "cases"),
        "out": _resolve(args, config, "out"),
        "provider": _resolve(args, config, "provider"),
        "wm_provider": _resolve(args, config, "wm_provider"),
        "seed": _resolve(args, config, "seed", 0),
    }
    _require(params, "cases", "out", "provider")
    return params


def _run_bench_run(params, ctx):
    cases = read_cases(params["cases"])
    judge = ctx.gateway(params["provider"], Role.VALUE_JUDGE)
    wm = ctx.gateway(params["wm_provider"] or params["provider"],
                     Role.WORLD_MODEL)
    results = run_bench(cases, wm_predictor(wm), judge,
                        rng_seed=params["seed"])
    write_results(results, params["out"])
    errored = sum(1 for r in results if r.prediction is None)
    print(f"ran {len(results)} cases ({errored} errored)")


def _resolve_bench_report(args, config):
    params = {
        "results": _resolve(args, config, "results"),
        "out": _resolve(args, config, "out"),
    }
    _require(params, "results")
    return params


def _run_bench_report(params, ctx):
    table = aggregate(read_results(params["results"]))
    text = json.dumps(table, indent=2, sort_keys=True)
    print(text)
    if params["out"]:
        Path(params["out"]).write_text(text + "\n", encoding="utf-8")


def _resolve_synthesize(args, config):
    params = {
        "seeds": _resolve(args, config, "seeds"),
        "out": _resolve(args, config, "out"),
        "graph": _resolve(args, config, "graph"),
        "env_cmd": _resolve(args, config, "env_cmd"),
        "provider": _resolve(args, config, "provider"),
        "judge_provider": _resolve(args, config, "judge_provider"),
        "fanout": _resolve(args, config, "fanout"),
        "max_steps": _resolve(args, config, "max_steps"),
        "seed": _resolve(args, config, "seed", 0),
    }
    _require(params, "seeds", "out", "provider")
    _one_backend(params)
    return params


def _run_synthesize(params, ctx):
    seeds = [SynthSeed(obj["task"], obj["url"])
             for obj in _read_jsonl_objs(params["seeds"])]
    gateway = ctx.gateway(params["provider"], Role.SYNTH)
    judge = ctx.gateway(params["judge_provider"] or params["provider"],
                        Role.VALUE_JUDGE)
    kwargs = {"rng_seed": params["seed"]}
    for key in ("fanout", "max_steps"):
        if params[key] is not None:
            kwargs[key] = params[key]
    try:
        accepted, report = synthesize_batch(seeds, _env_factory(params, ctx),
                                            gateway, judge,
                                            SynthConfig(**kwargs))
    finally:
        ctx.close()
    write_jsonl(accepted, params["out"])
    ctx.write_report(report.to_obj())
    print(f"accepted {report.accepted}/{report.attempts} attempts")


# --- parser wiring ------------------------------------------------------------------


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--runs-dir", metavar="DIR")
    common.add_argument("--config", metavar="FILE")

    parser = _Parser(prog="forge", description=__doc__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    def leaf(group, name, slug, resolver, executor, help_):
        p = group.add_parser(name, parents=[common], help=help_)
        p.set_defaults(slug=slug, resolver=resolver, executor=executor)
        return p

    p = leaf(subs, "parse", "parse", _resolve_parse, _run_parse,
             "check a page snapshot and print its shape")
    p.add_argument("file")

    p = leaf(subs, "transpile", "transpile", _resolve_transpile,
             _run_transpile, "rewrite a page snapshot in another format")
    p.add_argument("file")
    p.add_argument("--fmt", choices=_TRANSPILE_FMTS)

    traj = subs.add_parser("traj", help="trajectory corpus utilities")
    traj_subs = traj.add_subparsers(dest="traj_cmd", required=True)
    p = leaf(traj_subs, "stats", "traj-stats", _resolve_traj_stats,
             _run_traj_stats, "turn/token histograms for a corpus file")
    p.add_argument("file")

    env = subs.add_parser("env", help="environment serving and checking")
    env_subs = env.add_subparsers(dest="env_cmd_name", required=True)
    p = leaf(env_subs, "serve-mock", "env-serve-mock", _resolve_serve_mock,
             _run_serve_mock, "serve a canned site over stdio")
    p.add_argument("graph")
    p = leaf(env_subs, "conformance", "env-conformance", _resolve_conformance,
             _run_conformance_cmd, "probe an adapter subprocess for protocol fit")
    p.add_argument("--cmd", metavar="COMMAND")
    p.add_argument("--reset-url", metavar="URL")

    p = leaf(subs, "collect", "collect", _resolve_collect, _run_collect,
             "walk sites and write trajectories")
    p.add_argument("--level", type=int, choices=sorted(_LEVELS))
    p.add_argument("--urls", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--graph", metavar="FILE")
    p.add_argument("--env-cmd", metavar="COMMAND")
    p.add_argument("--provider", metavar="FILE")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--min-steps", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--l3-seeds", type=int)
    p.add_argument("--l3-variants", type=int)
    p.add_argument("--l3-paraphrases", type=int)

    filt = subs.add_parser("filter", help="drop unusable sites or trajectories")
    filt_subs = filt.add_subparsers(dest="filter_cmd", required=True)
    p = leaf(filt_subs, "urls", "filter-urls", _resolve_filter_urls,
             _run_filter_urls, "reachability, keyword, and judge screening")
    p.add_argument("--in", dest="in_", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--report", metavar="FILE")
    p.add_argument("--graph", metavar="FILE")
    p.add_argument("--provider", metavar="FILE")
    p.add_argument("--blocklist", metavar="FILE")
    p = leaf(filt_subs, "traj", "filter-traj", _resolve_filter_traj,
             _run_filter_traj, "length, token, and keyword caps")
    p.add_argument("--in", dest="in_", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--report", metavar="FILE")
    p.add_argument("--blocklist", metavar="FILE")
    p.add_argument("--token-cap", type=int)
    p.add_argument("--turn-cap", type=int)

    p = leaf(subs, "search", "search", _resolve_search, _run_search,
             "run lookahead episodes against a canned site")
    p.add_argument("--graph", metavar="FILE")
    p.add_argument("--episodes", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--algo", choices=[a.value for a in Algorithm])
    p.add_argument("-k", type=int)
    p.add_argument("--scoring", choices=[s.value for s in Scoring])
    p.add_argument("--sim-format", choices=[f.value for f in SimFormat])
    p.add_argument("--agent", choices=["graph", "llm"])
    p.add_argument("--wm", choices=["graph", "llm"])
    p.add_argument("--value", choices=["oracle", "llm"])
    p.add_argument("--provider", metavar="FILE")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--uct-c", type=float)
    p.add_argument("--seed", type=int)

    bench = subs.add_parser("bench", help="build, run, and summarize the bench")
    bench_subs = bench.add_subparsers(dest="bench_cmd", required=True)
    p = leaf(bench_subs, "build", "bench-build", _resolve_bench_build,
             _run_bench_build, "derive cases from a trajectory corpus")
    p.add_argument("--in", dest="in_", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--provider", metavar="FILE")
    p.add_argument("--seed", type=int)
    p.add_argument("--fine-grained-threshold", type=int)
    p = leaf(bench_subs, "run", "bench-run", _resolve_bench_run,
             _run_bench_run, "predict and judge every case")
    p.add_argument("--cases", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--provider", metavar="FILE")
    p.add_argument("--wm-provider", metavar="FILE")
    p.add_argument("--seed", type=int)
    p = leaf(bench_subs, "report", "bench-report", _resolve_bench_report,
             _run_bench_report, "aggregate results into the score table")
    p.add_argument("--results", metavar="FILE")
    p.add_argument("--out", metavar="FILE")

    p = leaf(subs, "synthesize", "synthesize", _resolve_synthesize,
             _run_synthesize, "propose, verify, and keep new task trajectories")
    p.add_argument("--seeds", metavar="FILE")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--graph", metavar="FILE")
    p.add_argument("--env-cmd", metavar="COMMAND")
    p.add_argument("--provider", metavar="FILE")
    p.add_argument("--judge-provider", metavar="FILE")
    p.add_argument("--fanout", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--seed", type=int)

    return parser


def _write_run_json(run_dir: Path, slug: str, argv, params: dict) -> None:
    obj = {
        "argv": list(argv) if argv is not None else sys.argv[1:],
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "params": params,
        "subcommand": slug,
    }
    (run_dir / "run.json").write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help exits argparse directly
        return 0 if exc.code in (0, None) else 1

    config = {}
    try:
        if args.config:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(config, dict):
                raise ValueError("--config must hold a JSON object")
        params = args.resolver(args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _PIPELINE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    runs_dir = Path(args.runs_dir or config.get("runs_dir", "runs"))
    try:
        run_dir = _new_run_dir(runs_dir, args.slug)
        _write_run_json(run_dir, args.slug, argv, params)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    ctx = _RunContext(run_dir)
    try:
        rc = args.executor(params, ctx)
        rc = 0 if rc is None else rc
    except _PIPELINE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        rc = 2
    finally:
        ctx.close()
        ctx.transcript.write_jsonl(run_dir / "transcript.jsonl")
    return rc


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
