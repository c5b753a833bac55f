"""Command-line interface.

Exit codes: 0 success, 1 invalid input or arguments, 2 model/runtime error
(zero posterior mass, particle impoverishment).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .decode import AGGREGATIONS, decode_words, frame_location_summary, posterior_array
from .emissions import LOCATION_FEATURES, EmissionConfig, pack_observations
from .filter import FilterConfig, ModelDataMismatchError, iter_forward
from .model import check_params
from .pipeline import diarisation_metrics, initialize_params
from .simkit import SimConfig, grid_hmm_posterior, simulate_meeting
from .smoother import ParticleImpoverishmentError, backward_pass

EXIT_OK, EXIT_INVALID, EXIT_MODEL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_filter_options(p):
    p.add_argument("--particles", type=int, default=20000)
    p.add_argument("--ess", type=float, default=0.5, help="resample when ESS < ess * R")
    p.add_argument("--feature", choices=LOCATION_FEATURES, default="ssl")
    p.add_argument("--restrict-boundaries", action="store_true",
                   help="only allow speaker changes at word starts")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sspf", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults for the subcommand")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic meeting")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--speakers", type=int, default=4)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--frames", type=int, default=1500)
    p.add_argument("--sigma", type=float, default=1000.0, help="true movement concentration")
    p.add_argument("--kappa", type=float, default=10.0, help="true location noise concentration")
    p.add_argument("--gamma", type=float, default=15.0, help="true d-vector concentration")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--bins", type=int, default=360)
    p.add_argument("--persistence", type=float, default=0.9)
    p.add_argument("--silence-prob", type=float, default=0.3)
    p.add_argument("--word-min", type=int, default=1)
    p.add_argument("--word-max", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("init", help="initialise model parameters by AHC")
    p.add_argument("--obs", required=True)
    p.add_argument("--words", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channels", type=int)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.1, help="uniform smoothing of transitions")
    p.add_argument("--gamma", type=float, default=15.0)
    p.add_argument("--sigma-move", type=float, default=1000.0)
    p.add_argument("--kappa", type=float, default=10.0)
    p.add_argument("--bins", type=int, default=360)
    p.add_argument("--enroll", help="params file whose centroids tag the clusters")

    p = sub.add_parser("filter", help="forward pass")
    p.add_argument("--obs", required=True)
    p.add_argument("--words", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True, help="filtered posteriors (JSONL)")
    p.add_argument("--store", help="binary ensemble store for smooth/trace")
    _add_filter_options(p)

    p = sub.add_parser("smooth", help="backward pass over an ensemble store")
    p.add_argument("--store", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--words", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-backward", type=int, default=5000)
    p.add_argument("--restrict-boundaries", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("decode", help="word speaker labels from posteriors")
    p.add_argument("--words", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--posteriors", help="posteriors file; otherwise run the filter")
    p.add_argument("--obs")
    p.add_argument("--params")
    p.add_argument("--aggregate", choices=AGGREGATIONS, default="sum")
    _add_filter_options(p)

    p = sub.add_parser("trace", help="per-speaker location trace from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score hypothesis word labels")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", help="write the report here as well as stdout")

    p = sub.add_parser("oracle", help="exact grid posteriors for small instances")
    p.add_argument("--obs", required=True)
    p.add_argument("--words", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--grid", type=int, default=36)
    p.add_argument("--feature", choices=LOCATION_FEATURES, default="ssl")
    p.add_argument("--restrict-boundaries", action="store_true")
    p.add_argument("--out-filtered", required=True)
    p.add_argument("--out-smoothed", required=True)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config}: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(k.replace("-", "_") for k in overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    return args


def _filter_configs(args, params):
    emis = EmissionConfig.from_params(params, args.feature)
    filt = FilterConfig(args.particles, args.ess, args.restrict_boundaries, args.seed)
    return emis, filt


def cmd_simulate(args):
    cfg = SimConfig(M=args.speakers, N=args.channels, T=args.frames, sigma_true=args.sigma,
                    kappa_true=args.kappa, gamma_true=args.gamma, D=args.dim, S=args.bins,
                    persistence=args.persistence, silence_prob=args.silence_prob,
                    word_frames=(args.word_min, args.word_max), seed=args.seed)
    frames, words, truth, params = simulate_meeting(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_observations(out / "observations.jsonl", frames)
    io.write_words(out / "words.jsonl", words)
    io.write_words(out / "ref_words.jsonl", words, truth.word_labels)
    io.write_truth(out / "truth.jsonl", truth)
    io.write_params(out / "params.json", params)


def cmd_init(args):
    frames = io.read_observations(args.obs)
    words, _ = io.read_words(args.words)
    N = args.channels or 1 + max((n for f in frames for n in f.channels), default=0)
    enrolled = io.read_params(args.enroll).mu if args.enroll else None
    params, _ = initialize_params(frames, words, N, args.gamma, args.sigma_move, args.kappa,
                                  args.threshold, args.alpha, args.bins, enrolled)
    io.write_params(args.out, params)
    print(f"init: {params.M} speakers from {len(words)} words", file=sys.stderr)


def _run_forward(args, params, frames, words, store=None):
    emis, filt = _filter_configs(args, params)
    packed = pack_observations(frames, params, emis)
    posts = []
    writer = None
    try:
        for ens in iter_forward(packed, words, params, emis, filt):
            if store:
                if writer is None:
                    writer = io.EnsembleWriter(store, ens.R, params.M, params.N)
                writer.write(ens)
            posts.append(posterior_array([ens], params.M)[0])
    finally:
        if writer is not None:
            writer.close()
    return np.array(posts)


def _load_model(args):
    params = check_params(io.read_params(args.params))
    frames = io.read_observations(args.obs)
    words, _ = io.read_words(args.words)
    return params, frames, words


def cmd_filter(args):
    params, frames, words = _load_model(args)
    _filter_configs(args, params)
    io.write_posteriors(args.out, _run_forward(args, params, frames, words, args.store))


def cmd_smooth(args):
    params = check_params(io.read_params(args.params))
    words, _ = io.read_words(args.words)
    head = io.read_store_header(args.store)
    if (head["M"], head["N"]) != (params.M, params.N):
        raise ValueError(f"store has M={head['M']}, N={head['N']}; params M={params.M}, N={params.N}")
    filt = FilterConfig(max(head["R"], 1), 0.5, args.restrict_boundaries, args.seed)
    smoothed = backward_pass(io.iter_ensembles(args.store), params, filt, args.k_backward, words)
    io.write_posteriors(args.out, posterior_array(smoothed, params.M))


def cmd_decode(args):
    words, _ = io.read_words(args.words)
    if args.posteriors:
        posteriors = io.read_posteriors(args.posteriors)
    else:
        if not (args.obs and args.params):
            raise ValueError("decode needs --posteriors, or --obs and --params")
        params, frames, words = _load_model(args)
        _filter_configs(args, params)
        posteriors = _run_forward(args, params, frames, words)
    labels = decode_words(posteriors, words, args.aggregate)
    io.write_words(args.out, words, labels)


def cmd_trace(args):
    means, res = [], []
    for ens in io.iter_ensembles(args.store):
        m, r = frame_location_summary(ens)
        means.append(np.atleast_1d(m))
        res.append(np.atleast_1d(r))
    io.write_trace(args.out, np.array(means), np.array(res))


def cmd_eval(args):
    hyp_words, hyp = io.read_words(args.hyp)
    ref_words, ref = io.read_words(args.ref)
    if hyp is None or ref is None:
        raise ValueError("both --hyp and --ref need a speaker on every word")
    if [(w.n, w.start, w.end) for w in hyp_words] != [(w.n, w.start, w.end) for w in ref_words]:
        raise ValueError("hypothesis and reference word inventories differ")
    durations = [w.end - w.start + 1 for w in ref_words]
    report = diarisation_metrics(hyp, ref, durations).to_text()
    sys.stdout.write(report)
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")


def cmd_oracle(args):
    params, frames, words = _load_model(args)
    post = grid_hmm_posterior(frames, words, params, args.grid, args.feature,
                              args.restrict_boundaries)
    io.write_posteriors(args.out_filtered, post.filtered)
    io.write_posteriors(args.out_smoothed, post.smoothed)


COMMANDS = {
    "simulate": cmd_simulate,
    "init": cmd_init,
    "filter": cmd_filter,
    "smooth": cmd_smooth,
    "decode": cmd_decode,
    "trace": cmd_trace,
    "eval": cmd_eval,
    "oracle": cmd_oracle,
}


def run(argv=None) -> int:
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (ModelDataMismatchError, ParticleImpoverishmentError) as exc:
        print(f"sspf: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ValueError, TypeError, KeyError, OSError) as exc:
        print(f"sspf: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
