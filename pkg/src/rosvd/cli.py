"""``rosvd`` command-line entry point.

Exit status: 0 success, 2 configuration or usage error, 3 duplicate
registration, 4 transaction budget exhausted, 5 integrity failure, 6 trace
miss, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import matio, nist, pipeline, sim, svd
from .config import AppConfig, load_config
from .errors import ConfigError, IntegrityError, RosvdError, TraceMissError
from .ledger import Ledger, LedgerRecord

EXIT_OK = 0


def _out(text: str = "") -> None:
    sys.stdout.write(text + ("\n" if not text.endswith("\n") else ""))


def _kv(**pairs) -> None:
    for key, value in pairs.items():
        if isinstance(value, bytes):
            value = value.hex()
        _out(f"{key} = {value}")


def _print_record(rec: LedgerRecord) -> None:
    _kv(
        index=rec.index,
        timestamp=rec.timestamp,
        kind=rec.kind,
        device_id=rec.device_id,
        auth_hash=rec.auth_hash,
        payload_hash=rec.payload_hash,
        stoch_hash=rec.stoch_hash,
        tx_limit=rec.tx_limit,
        prev_hash=rec.prev_hash,
        record_hash=rec.record_hash,
    )


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        r, c = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}") from None
    if r < 1 or c < 1:
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return r, c


def _sim_config(cfg: AppConfig, args) -> sim.SimConfig:
    rows, cols = args.dims if getattr(args, "dims", None) else (None, None)
    return sim.with_overrides(
        cfg.sim,
        rows=rows,
        cols=cols,
        noise_sigma=getattr(args, "noise_sigma", None),
        fingerprint_rank=getattr(args, "fingerprint_rank", None),
    )


def _params(cfg: AppConfig, args) -> pipeline.PipelineParams:
    changes = {k: getattr(args, k, None) for k in ("k_head", "k_removed")}
    return replace(cfg.pipeline, **{k: v for k, v in changes.items() if v is not None})


def _ledger(cfg: AppConfig, args) -> Ledger:
    return Ledger(args.journal or cfg.ledger.journal)


def _sample(device: sim.DeviceModel, args, rep: int) -> sim.ResponseMatrix:
    temp = device.reference_temp if args.temperature is None else args.temperature
    return sim.sample_response(device, sim.EnvCondition(temp, rep))


# -- commands -------------------------------------------------------------------


def cmd_device_new(cfg: AppConfig, args) -> int:
    device = sim.new_device(_sim_config(cfg, args), args.seed, device_id=args.id)
    sim.save_device(args.out, device)
    _kv(device_id=device.device_id, rng_seed=device.rng_seed, shape=f"{device.shape[0]}x{device.shape[1]}", out=args.out)
    return EXIT_OK


def cmd_device_sample(cfg: AppConfig, args) -> int:
    device = sim.load_device(args.device)
    response = _sample(device, args, args.rep)
    if args.format == "csv":
        Path(args.out).write_text(matio.matrix_to_csv(response.values))
    else:
        matio.save_matrix(args.out, response.values)
    _kv(device_id=device.device_id, repetition=args.rep, temperature=response.env.temperature_celsius, out=args.out)
    return EXIT_OK


def cmd_register(cfg: AppConfig, args) -> int:
    device = sim.load_device(args.device)
    bundle = pipeline.derive_bundle(_sample(device, args, args.rep), _params(cfg, args))
    limit = cfg.ledger.default_tx_limit if args.tx_limit is None else args.tx_limit
    rec = _ledger(cfg, args).register(device.device_id, bundle.auth_hash, bundle.stoch_hash, limit)
    _print_record(rec)
    return EXIT_OK


def cmd_mark(cfg: AppConfig, args) -> int:
    from . import watermark

    device = sim.load_device(args.device)
    ledger = _ledger(cfg, args)
    # every mark draws a fresh response so that its stochastic digest is new
    rep = args.rep
    if rep is None:
        rep = 1 + sum(1 for r in ledger.records() if r.device_id == device.device_id and r.kind != "register")
    bundle = pipeline.derive_bundle(_sample(device, args, rep), _params(cfg, args))
    reg = ledger.registration(device.device_id)
    if reg is not None and reg.auth_hash != bundle.auth_hash:
        raise TraceMissError(
            f"fresh authentication digest {bundle.auth_hash.hex()} does not match the registered one for "
            f"{device.device_id}"
        )
    source = watermark.load_image(args.image)
    marked, rec = watermark.mark_image(source, bundle, ledger, device.device_id)
    watermark.save_image(args.out, marked)
    _print_record(rec)
    _kv(repetition=rep, psnr_db=f"{watermark.psnr(source, marked):.2f}", out=args.out)
    return EXIT_OK


def _image_dims(cfg: AppConfig, args, marked):
    if args.dims:
        return args.dims
    if marked.descriptor is not None:
        return marked.descriptor.auth_dims, marked.descriptor.stoch_dims
    return cfg.sim.rows, cfg.sim.cols


def cmd_verify(cfg: AppConfig, args) -> int:
    from . import watermark

    marked = watermark.load_image(args.image)
    report = watermark.verify_marked(marked, _image_dims(cfg, args, marked), _ledger(cfg, args), cfg.pipeline.hash_alg)
    _kv(
        auth_hash=report.auth_hash,
        stoch_hash=report.stoch_hash,
        device_id=report.trace.device_id or "-",
        trace="PASS" if report.traced else "FAIL",
        integrity="PASS" if report.integrity else "FAIL",
    )
    if not report.traced:
        reason = "stochastic digest matches no mark" if report.trace.matched else "no registered device"
        raise TraceMissError(f"trace failed: {reason}")
    if not report.integrity:
        raise IntegrityError("integrity check failed: blue-channel digest matches no mark record")
    return EXIT_OK


def cmd_trace(cfg: AppConfig, args) -> int:
    if args.image:
        from . import watermark

        marked = watermark.load_image(args.image)
        auth, _ = watermark.extract(marked, _image_dims(cfg, args, marked))
        digest = pipeline.hash_bits(auth, cfg.pipeline.hash_alg)
    else:
        try:
            digest = bytes.fromhex(args.auth_hash)
        except ValueError:
            raise ConfigError(f"--auth-hash must be hex, got {args.auth_hash!r}") from None
    result = _ledger(cfg, args).trace(digest)
    _kv(auth_hash=digest, device_id=result.device_id or "-")
    if not result.matched:
        raise TraceMissError("no registered device has this authentication digest")
    _kv(record_index=result.record_index, remaining_budget=result.remaining_budget)
    return EXIT_OK


def cmd_ledger_verify(cfg: AppConfig, args) -> int:
    status = _ledger(cfg, args).verify_chain()
    if status:
        _kv(chain="PASS", records=len(_ledger(cfg, args).records()))
        return EXIT_OK
    _kv(chain="FAIL", first_bad_index=status.first_bad_index, byte_offset=status.byte_offset, reason=status.reason)
    raise IntegrityError(f"journal chain broken at record {status.first_bad_index}")


def _write_csv(header, rows) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _load_matrix(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        return matio.matrix_from_csv(Path(path).read_text())
    return matio.load_matrix(path)


def cmd_analyze_spectrum(cfg: AppConfig, args) -> int:
    if args.matrix:
        A = _load_matrix(args.matrix)
    elif args.device:
        A = _sample(sim.load_device(args.device), args, args.rep).values
    else:
        raise ConfigError("analyze spectrum needs --matrix or --device")
    spectrum = svd.spectrum_report(A)
    if args.csv:
        _write_csv(["index", "singular_value"], [(i, repr(s)) for i, s in spectrum])
    else:
        _out(f"# singular values of a {A.shape[0]}x{A.shape[1]} matrix")
        _out("# index\tsingular_value")
        for i, s in spectrum:
            _out(f"{i}\t{s:.12e}")
    if args.figure:
        from .plotting import spectrum_figure

        spectrum_figure(args.figure, spectrum, _params(cfg, args).k_removed)
    return EXIT_OK


def cmd_analyze_hamming(cfg: AppConfig, args) -> int:
    p = _params(cfg, args)
    groups = {}
    if args.matrix:
        groups["input"] = [_load_matrix(m) for m in args.matrix]
    devices = [sim.load_device(d) for d in args.device or []]
    for dev in devices:
        groups[f"same:{dev.device_id}"] = [_sample(dev, args, k) for k in range(args.reps)]
    if len(devices) >= 2:
        groups["cross"] = [_sample(dev, args, 0) for dev in devices]
    if not groups:
        raise ConfigError("analyze hamming needs --matrix files or --device descriptors")
    report = pipeline.hamming_report(groups, p)
    if args.csv:
        _write_csv(
            ["group", "raw_avg", "processed_avg", "n_matrices"],
            [(g.group, f"{g.raw_avg:.6f}", f"{g.processed_avg:.6f}", g.n_matrices) for g in report],
        )
    else:
        _out(pipeline.format_hamming_report(report))
    if args.figure:
        from .plotting import hamming_figure

        hamming_figure(args.figure, report)
    return EXIT_OK


def cmd_analyze_randomness(cfg: AppConfig, args) -> int:
    if args.bits:
        bits = nist.read_bitstream(args.bits)
    elif args.device:
        devices = [sim.load_device(d) for d in args.device]
        responses = (_sample(dev, args, k) for k in itertools.count() for dev in devices)
        bits = pipeline.stochastic_stream(responses, args.n_bits, _params(cfg, args))
    else:
        raise ConfigError("analyze randomness needs --bits or --device")
    alpha = cfg.suite.alpha if args.alpha is None else args.alpha
    suite = nist.SuiteConfig(alpha, tuple(args.tests) if args.tests else cfg.suite.tests, cfg.suite.template)
    results = nist.run_suite(bits, suite)
    if args.csv:
        _write_csv(
            ["test", "n_bits", "p_value", "verdict"],
            [(r.test_name, r.n_bits, "" if r.p_value is None else f"{r.p_value:.6f}", r.status) for r in results],
        )
    else:
        _out(nist.format_suite_report(results))
    if args.figure:
        from .plotting import randomness_figure

        randomness_figure(args.figure, results, alpha)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rosvd", description="Ring-oscillator SVD provenance toolkit.")
    parser.add_argument("--config", help="TOML config file (overrides $ROSVD_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    def sampling(p):
        p.add_argument("--temperature", type=float, help="ambient temperature in Celsius")

    def pipeline_flags(p):
        p.add_argument("--k-head", type=int, dest="k_head")
        p.add_argument("--k-removed", type=int, dest="k_removed")

    def journal(p):
        p.add_argument("--journal", help="ledger journal path")

    device = sub.add_parser("device", help="simulated devices").add_subparsers(dest="action", required=True)
    p = device.add_parser("new", help="create a device descriptor")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--id")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=_parse_dims, help="ROWSxCOLS")
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma")
    p.add_argument("--fingerprint-rank", type=int, dest="fingerprint_rank")
    p.set_defaults(func=cmd_device_new)

    p = device.add_parser("sample", help="write one response matrix")
    p.add_argument("--device", required=True)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("rosv", "csv"), default="rosv")
    sampling(p)
    p.set_defaults(func=cmd_device_sample)

    p = sub.add_parser("register", help="register a device on the ledger")
    p.add_argument("--device", required=True)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--tx-limit", type=int, dest="tx_limit")
    sampling(p)
    pipeline_flags(p)
    journal(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("mark", help="embed a fresh seed bundle into a PNG")
    p.add_argument("--device", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rep", type=int, help="repetition index (default: one past the device's last transaction)")
    sampling(p)
    pipeline_flags(p)
    journal(p)
    p.set_defaults(func=cmd_mark)

    p = sub.add_parser("verify", help="trace and integrity-check a marked image")
    p.add_argument("--image", required=True)
    p.add_argument("--dims", type=_parse_dims)
    journal(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("trace", help="look up the device behind an authentication digest")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--auth-hash", dest="auth_hash")
    src.add_argument("--image")
    p.add_argument("--dims", type=_parse_dims)
    journal(p)
    p.set_defaults(func=cmd_trace)

    led = sub.add_parser("ledger", help="ledger maintenance").add_subparsers(dest="action", required=True)
    p = led.add_parser("verify", help="check the hash chain")
    journal(p)
    p.set_defaults(func=cmd_ledger_verify)

    analyze = sub.add_parser("analyze", help="analysis reports").add_subparsers(dest="action", required=True)

    def report(p):
        p.add_argument("--csv", action="store_true", help="emit a CSV table")
        p.add_argument("--figure", help="also render a PNG figure to this path")

    p = analyze.add_parser("spectrum", help="singular value spectrum")
    p.add_argument("--matrix", help="ROSV or CSV matrix file")
    p.add_argument("--device")
    p.add_argument("--rep", type=int, default=0)
    sampling(p)
    pipeline_flags(p)
    report(p)
    p.set_defaults(func=cmd_analyze_spectrum)

    p = analyze.add_parser("hamming", help="raw vs processed Hamming distances")
    p.add_argument("--matrix", action="append", help="matrix file forming group 'input' (repeatable)")
    p.add_argument("--device", action="append", help="device descriptor (repeatable)")
    p.add_argument("--reps", type=int, default=10)
    sampling(p)
    pipeline_flags(p)
    report(p)
    p.set_defaults(func=cmd_analyze_hamming)

    p = analyze.add_parser("randomness", help="statistical test suite")
    p.add_argument("--bits", help="bit stream file (ASCII 0/1 or raw bytes)")
    p.add_argument("--device", action="append", help="device descriptor (repeatable)")
    p.add_argument("--n-bits", type=int, default=1_000_000, dest="n_bits")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tests", nargs="+", choices=nist.TEST_NAMES)
    sampling(p)
    pipeline_flags(p)
    report(p)
    p.set_defaults(func=cmd_analyze_randomness)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except RosvdError as exc:
        print(f"rosvd: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"rosvd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
