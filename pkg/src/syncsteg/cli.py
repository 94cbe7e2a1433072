"""Command-line front end.

Exit codes: 0 findings, 3 no findings, 2 usage error, 1 runtime error,
4 incomplete reassembly. Data goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .analysis import ReportConfig, export_features, feature_columns, full_report, load_magic_table
from .audio_io import load_wav, write_wav
from .embed import ClippingWarning, EmbedSpec, embed_message, generate_carrier
from .fixtures import generate_suite
from .fragment import ReassemblyError, detect_fragments, embed_fragment, fragment_bytes, reassemble
from .payload import GuidanceBlock, decode_events, decode_message, encode_message
from .protocol import ProtocolConfig, ProtocolError
from .spectral import WindowConfig, export_spectrogram_csv
from .sync_detect import detect

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_EMPTY = 3
EXIT_INCOMPLETE = 4

log = logging.getLogger("syncsteg")


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False)


def _time_range(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        t0, t1 = float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected t0:t1 in seconds, got {text!r}")
    if not 0 <= t0 < t1:
        raise argparse.ArgumentTypeError(f"need 0 <= t0 < t1, got {text!r}")
    return t0, t1


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--protocol", metavar="FILE", help="protocol JSON (flags override its values)")
    g.add_argument("--window-ms", type=float, help="analysis window length (default 25)")
    g.add_argument("--hop-ms", type=float, help="analysis hop (default 10)")
    g.add_argument("--epsilon-hz", type=float, help="frequency tolerance (default 20)")
    g.add_argument("--seed", type=int, default=0, help="seed for generated carriers")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json", help="JSON output (default)")
    fmt.add_argument("--csv", dest="fmt", action="store_const", const="csv", help="CSV output")
    fmt.add_argument("--text", dest="fmt", action="store_const", const="text", help="plain text output")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _configs(args) -> tuple[ProtocolConfig, WindowConfig]:
    cfg = ProtocolConfig.load(args.protocol) if args.protocol else ProtocolConfig()
    cfg = cfg.with_overrides(tolerance_hz=args.epsilon_hz)
    base = WindowConfig()
    wcfg = WindowConfig(
        window_ms=args.window_ms if args.window_ms is not None else base.window_ms,
        hop_ms=args.hop_ms if args.hop_ms is not None else base.hop_ms,
    )
    wcfg.validate_for(44100)
    if wcfg.hop_ms > cfg.symbol_ms / 2:
        raise UsageError("--hop-ms must be at most half the symbol duration")
    return cfg, wcfg


def _generated_carrier(args, kind_dur=None, seed_offset: int = 0):
    kind, dur = kind_dur or args.generate
    try:
        dur = float(dur)
    except ValueError:
        raise UsageError(f"--generate duration must be a number, got {dur!r}")
    try:
        return generate_carrier(kind, dur, level_db=args.level_db, seed=args.seed + seed_offset)
    except ValueError as exc:
        raise UsageError(f"--generate: {exc}")


def _payload_from_args(args) -> bytes | None:
    if args.payload is not None and args.blocks is not None:
        raise UsageError("use either --payload or --blocks")
    if args.payload is not None:
        try:
            raw = bytes.fromhex(args.payload)
        except ValueError:
            raise UsageError("--payload must be hex")
        return raw
    if args.blocks is not None:
        text = args.blocks
        if not text.lstrip().startswith("["):
            text = Path(text).read_text()
        try:
            items = json.loads(text)
            blocks = [GuidanceBlock(**{k: int(v) for k, v in b.items() if k != "heading_deg"}) for b in items]
            return encode_message(blocks)
        except (ValueError, TypeError, KeyError) as exc:
            raise UsageError(f"--blocks: {exc}")
    return None


def cmd_detect(args) -> int:
    cfg, wcfg = _configs(args)
    audio = load_wav(args.input)
    events = detect(audio, cfg, wcfg)
    if args.fmt == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["start_time_s", "confidence"] + [f"f{i}_hz" for i in range(8)])
        for e in events:
            d = e.to_dict()
            w.writerow([d["start_time_s"], d["confidence"]] + d["symbol_freqs_hz"])
        sys.stdout.write(out.getvalue())
    elif args.fmt == "text":
        for e in events:
            print(f"sync at {e.start_time_s:.4f} s  confidence {e.confidence:.3f}")
        print(f"{len(events)} detection(s)")
    else:
        print(_dump([e.to_dict() for e in events]))
    return EXIT_OK if events else EXIT_EMPTY


def cmd_decode(args) -> int:
    cfg, wcfg = _configs(args)
    audio = load_wav(args.input)
    events = detect(audio, cfg, wcfg)
    messages, failures = decode_events(audio, events, cfg, wcfg)
    for ev, err in failures:
        log.warning("detection at %.4f s not decoded: %s", ev.start_time_s, err)
    if args.fmt == "text":
        for m in messages:
            print(f"message at {m.sync.start_time_s:.4f} s: {m.raw_payload.hex()}")
            for i, b in enumerate(m.blocks):
                print(f"  block {i}: target {b.target_id:#04x} x {b.coord_x} y {b.coord_y} "
                      f"speed {b.speed} heading {b.heading_deg:.1f} cmd {b.command_code:#04x}")
    elif args.fmt == "csv":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["start_time_s", "block", "target_id", "coord_x", "coord_y", "speed", "heading",
                    "heading_deg", "command_code"])
        for m in messages:
            for i, b in enumerate(m.blocks):
                d = b.to_dict()
                w.writerow([round(m.sync.start_time_s, 6), i] + list(d.values()))
    else:
        print(_dump([m.to_dict() for m in messages]))
    return EXIT_OK if messages else EXIT_EMPTY


def cmd_embed(args) -> int:
    cfg, _ = _configs(args)
    payload = _payload_from_args(args)
    if payload is not None and len(payload) != cfg.payload_len:
        raise UsageError(f"payload must be exactly {cfg.payload_len} bytes, got {len(payload)}")
    if args.carrier:
        carrier = load_wav(args.carrier)
    elif args.generate:
        carrier = _generated_carrier(args)
    else:
        raise UsageError("give a carrier WAV or --generate KIND SECONDS")
    out = Path(args.output)
    sidecar = {"file": out.name, "protocol": cfg.to_dict(), "duration_s": None, "clipped": False,
               "payload_hex": None, "at_time_s": None, "blocks": []}
    if payload is not None:
        spec = EmbedSpec(payload, args.at, gain_db=args.gain_db, ramp_ms=args.ramp_ms,
                         freq_offset_hz=args.freq_offset_hz)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ClippingWarning)
            buf = embed_message(carrier, spec, cfg)
        for wn in caught:
            log.warning("%s", wn.message)
        sidecar.update(spec.to_dict())
        sidecar["clipped"] = bool(buf.meta.get("clipped"))
        sidecar["blocks"] = [b.to_dict() for b in decode_message(payload)]
    else:
        buf = carrier
    sidecar["duration_s"] = round(buf.duration_s, 6)
    write_wav(buf, out)
    out.with_suffix(".json").write_text(_dump(sidecar) + "\n")
    print(_dump(sidecar))
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg, wcfg = _configs(args)
    audio = load_wav(args.input)
    rcfg = ReportConfig(protocol=cfg, window=wcfg, normal_s=args.normal, anomalous_s=args.anomalous)
    if args.segment_len is not None:
        rcfg.entropy_segment_len = args.segment_len
    if args.magic_table:
        rcfg.magic_table = load_magic_table(args.magic_table)
    report = full_report(audio, rcfg)
    if args.energy_csv and report.energy is not None:
        report.energy.write_csv(args.energy_csv)
    if args.spectrogram_csv:
        export_spectrogram_csv(audio, wcfg, args.spectrogram_csv)
    if args.plots:
        from .plotting import render_report

        for p in render_report(report, audio, wcfg, args.plots, cfg):
            log.info("wrote %s", p)
    if args.fmt == "csv":
        if report.energy is None:
            raise RuntimeError(f"energy stage failed: {report.stages.get('energy')}")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["freq_hz", "normal_energy", "anomalous_energy", "excess"])
        e = report.energy
        for row in zip(e.freqs_hz, e.normal, e.anomalous, e.excess):
            w.writerow([f"{row[0]:.4f}"] + [f"{v:.6e}" for v in row[1:]])
        sys.stdout.write(buf.getvalue())
    elif args.fmt == "text":
        for k, v in report.to_dict()["stages"].items():
            print(f"{k:10s} {v}")
        print(f"detections {len(report.detections)}, messages {len(report.messages)}")
        if report.entropy is not None:
            print(f"entropy flags {report.entropy.flagged}")
        if report.energy is not None:
            print(f"peak excess at {report.energy.peak_excess_freq_hz:.1f} Hz")
    else:
        print(report.to_json())
    for name, status in report.stages.items():
        if status != "ok":
            log.warning("stage %s: %s", name, status)
    return EXIT_OK if report.detections else EXIT_EMPTY


def cmd_fragment(args) -> int:
    cfg, _ = _configs(args)
    raw = _payload_from_args(args)
    if raw is None:
        raise UsageError("--payload or --blocks is required")
    try:
        frags = fragment_bytes(raw)
    except ValueError as exc:
        raise UsageError(str(exc))
    prefix = Path(args.out_prefix)
    out = []
    for frag in frags:
        if args.carrier:
            carrier = load_wav(args.carrier)
        else:
            carrier = _generated_carrier(args, args.generate or ("white_noise", "2"), frag.seq_index)
        buf = embed_fragment(carrier, frag, args.at, cfg)
        path = Path(f"{prefix}-{frag.seq_index}.wav")
        write_wav(buf, path)
        d = frag.to_dict() | {"source_file": path.name, "start_time_s": args.at}
        path.with_suffix(".json").write_text(_dump(d) + "\n")
        out.append(d)
    print(_dump(out))
    return EXIT_OK


def cmd_reassemble(args) -> int:
    cfg, wcfg = _configs(args)
    audios = [load_wav(p) for p in args.inputs]
    frags, errors = detect_fragments(audios, cfg, wcfg, sources=[Path(p).name for p in args.inputs])
    for e in errors:
        log.warning("%s", e)
    result = {"fragments": [f.to_dict() for f in frags], "payload_hex": None, "errors": errors}
    code = EXIT_OK
    try:
        result["payload_hex"] = reassemble(frags).hex()
    except ReassemblyError as exc:
        result["errors"] = errors + [f"{type(exc).__name__}: {exc}"]
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_INCOMPLETE
    if args.fmt == "text":
        print(result["payload_hex"] or "")
    else:
        print(_dump(result))
    return code


def cmd_export_features(args) -> int:
    cfg, wcfg = _configs(args)
    audio = load_wav(args.input)
    path = Path(f"{args.out_prefix}_features.csv")
    n = export_features(audio, path, wcfg, cfg)
    print(_dump({"file": str(path), "rows": n, "columns": feature_columns()}))
    return EXIT_OK


def cmd_fixtures(args) -> int:
    manifest = generate_suite(args.out_dir, args.seed)
    print(_dump({"out_dir": str(args.out_dir), "files": len(manifest)}))
    return EXIT_OK


def _add_payload_args(p):
    p.add_argument("--payload", metavar="HEX", help="payload bytes as hex")
    p.add_argument("--blocks", metavar="JSON", help="guidance blocks as JSON (inline or file)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="syncsteg", description="Audio sync-frame steganalysis toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[common], help="locate sync frames")
    p.add_argument("input")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("decode", parents=[common], help="detect and decode payloads")
    p.add_argument("input")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("embed", parents=[common], help="embed a message into a carrier")
    p.add_argument("carrier", nargs="?", help="carrier WAV (or use --generate)")
    p.add_argument("output", help="output WAV; a .json ground-truth sidecar is written next to it")
    p.add_argument("--generate", nargs=2, metavar=("KIND", "SECONDS"),
                   help="synthetic carrier: silence | white_noise | speech_like")
    p.add_argument("--level-db", type=float, default=-20.0, help="generated noise RMS level")
    _add_payload_args(p)
    p.add_argument("--at", type=float, default=0.0, help="embedding time in seconds")
    p.add_argument("--gain-db", type=float, default=-6.0)
    p.add_argument("--ramp-ms", type=float, default=2.0)
    p.add_argument("--freq-offset-hz", type=float, default=0.0)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("analyze", parents=[common], help="full forensic report")
    p.add_argument("input")
    p.add_argument("--normal", type=_time_range, metavar="T0:T1")
    p.add_argument("--anomalous", type=_time_range, metavar="T0:T1")
    p.add_argument("--segment-len", type=int, help="entropy segment length in bytes")
    p.add_argument("--magic-table", metavar="FILE", help="JSON magic-number table")
    p.add_argument("--energy-csv", metavar="FILE", help="write the energy comparison CSV")
    p.add_argument("--spectrogram-csv", metavar="FILE", help="write the search-band spectrogram CSV")
    p.add_argument("--plots", metavar="DIR", help="render report figures (PNG) into DIR")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fragment", parents=[common], help="split a payload across carriers")
    _add_payload_args(p)
    p.add_argument("--out-prefix", required=True, help="writes PREFIX-<index>.wav and .json")
    p.add_argument("--carrier", help="carrier WAV used for every fragment")
    p.add_argument("--generate", nargs=2, metavar=("KIND", "SECONDS"))
    p.add_argument("--level-db", type=float, default=-20.0)
    p.add_argument("--at", type=float, default=0.2)
    p.set_defaults(func=cmd_fragment)

    p = sub.add_parser("reassemble", parents=[common], help="recover a payload from fragment carriers")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_reassemble)

    p = sub.add_parser("export-features", parents=[common], help="per-window feature matrix CSV")
    p.add_argument("input")
    p.add_argument("out_prefix")
    p.set_defaults(func=cmd_export_features)

    p = sub.add_parser("fixtures", parents=[common], help="generate the golden fixture suite")
    p.add_argument("out_dir")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"syncsteg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, ProtocolError) as exc:
        print(f"syncsteg: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
