"""Command-line front end.

Every pipeline setting can come from a plain-text ``key = value`` config file
(``--config``); command-line flags override the file, which overrides the
built-in defaults.  Exit codes: 0 success, 2 configuration error, 3 I/O
error, 4 infeasible channel budget.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from . import amc, fec, pipeline, vq, zeroout
from .dct_tokenizer import DctTokenizerConfig, training_vectors
from .errors import ConfigError, ImageFormatError, InfeasibleBudgetError, TrainingError
from .imageio import load_image, save_image

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INFEASIBLE = 0, 2, 3, 4

# config key -> converter; flag --foo-bar maps to key foo_bar
PIPELINE_KEYS = {
    "snr_db": float,
    "target_cbr": float,
    "seed": int,
    "patch_size": int,
    "block": int,
    "coeffs_per_token": int,
    "total_tokens": int,
    "key_count": int,
    "b_token": int,
    "budget_form": str,
    "mcs_table": str,
    "modulation": int,
    "code_rate": Fraction,
    "iterations": int,
    "extrinsic_scale": float,
    "h": complex,
    "codebook": str,
    "workers": int,
    "input": str,
    "output": str,
    "csv": str,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "cbr":
            key = "target_cbr"
        if key not in PIPELINE_KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        try:
            out[key] = PIPELINE_KEYS[key](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{source}:{n}: bad value for {key}: {exc}") from None
    return out


def merged_settings(args: argparse.Namespace) -> dict:
    settings = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        settings.update(parse_config_text(path.read_text(), str(path)))
    for key in PIPELINE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def build_config(settings: dict) -> tuple[pipeline.PipelineConfig, vq.Codebook]:
    size = settings.get("patch_size", 256)
    tok = DctTokenizerConfig(
        patch_height=size,
        patch_width=size,
        block=settings.get("block", 32),
        coeffs_per_token=settings.get("coeffs_per_token", 4),
        total_tokens=settings.get("total_tokens", 256),
        key_count=settings.get("key_count", 16),
    )
    m, r = settings.get("modulation"), settings.get("code_rate")
    if (m is None) != (r is None):
        raise ConfigError("modulation and code_rate must be given together")
    table = amc.McsTable.load(settings["mcs_table"]) if "mcs_table" in settings else None
    turbo = fec.TurboConfig(
        iterations=settings.get("iterations", 6),
        extrinsic_scale=settings.get("extrinsic_scale", 0.75),
    )
    cfg = pipeline.PipelineConfig(
        tokenizer=tok,
        target_cbr=settings.get("target_cbr", 1 / 256),
        snr_db=settings.get("snr_db", 6.0),
        h=settings.get("h", 1 + 0j),
        b_token=settings.get("b_token", 12),
        mcs_table=table,
        mcs_override=None if m is None else (m, Fraction(r)),
        turbo=turbo,
        budget_form=settings.get("budget_form", "consistent"),
        seed=settings.get("seed", 0),
    )
    cb = vq.Codebook.load(settings["codebook"]) if "codebook" in settings else pipeline.default_codebook()
    cfg.validate(cb)
    return cfg, cb


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline (override --config)")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--input", "-i", help="input image (PPM P6 or PNG)")
    g.add_argument("--snr-db", dest="snr_db", type=float, help="Es/N0 in dB; 'inf' for a noiseless channel")
    g.add_argument("--cbr", dest="target_cbr", type=float, help="target channel bandwidth ratio")
    g.add_argument("--seed", type=int)
    g.add_argument("--patch-size", dest="patch_size", type=int)
    g.add_argument("--block", type=int, help="DCT block size")
    g.add_argument("--coeffs-per-token", dest="coeffs_per_token", type=int)
    g.add_argument("--total-tokens", dest="total_tokens", type=int)
    g.add_argument("--key-count", dest="key_count", type=int)
    g.add_argument("--b-token", dest="b_token", type=int)
    g.add_argument("--budget-form", dest="budget_form", choices=("consistent", "printed"))
    g.add_argument("--mcs-table", dest="mcs_table", help="MCS table file (default: bundled)")
    g.add_argument("--modulation", type=int, choices=(1, 2, 4, 6), help="fixed bits per symbol")
    g.add_argument("--code-rate", dest="code_rate", type=Fraction, help="fixed code rate, e.g. 1/2")
    g.add_argument("--iterations", type=int, help="turbo decoder iterations")
    g.add_argument("--extrinsic-scale", dest="extrinsic_scale", type=float)
    g.add_argument("--h", type=complex, help="channel gain, e.g. 1+0j")
    g.add_argument("--codebook", help="codebook file (default: bundled)")
    g.add_argument("--workers", type=int, help="parallel worker threads")


def cmd_transmit(args) -> int:
    settings = merged_settings(args)
    if "input" not in settings:
        raise ConfigError("transmit needs --input")
    cfg, cb = build_config(settings)
    img = load_image(settings["input"])
    recon, report = pipeline.transmit(img, cfg, cb, workers=settings.get("workers", 1))
    if "output" in settings:
        save_image(recon, settings["output"])
    for key, value in report.as_dict().items():
        print(f"{key}={value}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    settings = merged_settings(args)
    if "input" not in settings:
        raise ConfigError("sweep needs --input")
    cfg, cb = build_config(settings)
    img = load_image(settings["input"])
    rows = pipeline.sweep(img, cfg, args.axis, args.values, args.trials, cb, settings.get("workers", 1))
    if "csv" in settings:
        pipeline.write_csv(rows, settings["csv"])
    else:
        pipeline.write_csv(rows, stream=sys.stdout)
    return EXIT_OK


def cmd_codebook_train(args) -> int:
    tok = DctTokenizerConfig(block=args.block, coeffs_per_token=args.coeffs_per_token,
                             total_tokens=args.total_tokens, key_count=args.key_count)
    images = [load_image(p) for p in args.images]
    samples = training_vectors(images, tok, stride=args.stride, flips=args.flips)
    if samples.shape[0] < args.K:
        raise ConfigError(f"{samples.shape[0]} training vectors cannot fit K={args.K} codewords")
    cb = vq.train_codebook(samples, args.K, args.seed)
    cb.save(args.output)
    print(f"codebook K={cb.K} d={cb.d} from {samples.shape[0]} vectors -> {args.output}")
    return EXIT_OK


def cmd_train_zeroout(args) -> int:
    data = zeroout.load_patches(args.data)
    model = zeroout.TinyAutoencoder.init(p=data.shape[1], n_tokens=args.tokens, token_dim=args.token_dim,
                                         hidden=args.hidden, seed=args.seed)
    cfg = zeroout.TrainConfig(key_count=args.key_count, batch_size=args.batch_size,
                              learning_rate=args.lr, steps=args.steps, seed=args.seed)
    untrained = zeroout.reconstruction_mse(model, data)
    zeroout.train(model, data, cfg, log_every=args.log_every)
    model.save(args.output)
    print(f"untrained_mse={untrained}")
    print(f"trained_mse={zeroout.reconstruction_mse(model, data)}")
    return EXIT_OK


def cmd_eval_gradient(args) -> int:
    model = zeroout.TinyAutoencoder.load(args.model)
    data = zeroout.load_patches(args.data)
    print("t,mse")
    for t, mse in zeroout.evaluate_information_gradient(model, data, args.t_values):
        print(f"{t},{mse}")
    return EXIT_OK


DEFAULT_CANDIDATES = "2:1/3,2:1/2,4:1/3,4:1/2,4:3/4,6:2/3"


def cmd_mcs_calibrate(args) -> int:
    candidates = []
    for item in args.candidates.split(","):
        m, r = item.split(":")
        m, r = int(m), Fraction(r)
        candidates.append((m, r, f"{pipeline.modem.NAMES[m]}-{r}"))
    rows = amc.calibrate_table(candidates, args.target_bler, args.blocks, args.info_len, args.seed)
    for m, r, label, thr in rows:
        print(f"# {label}: BLER <= {args.target_bler} from {thr:g} dB", file=sys.stderr)
    text = amc.table_from_calibration(rows).dumps()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokenlink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transmit", help="send one image over the simulated link")
    _add_pipeline_flags(p)
    p.add_argument("--output", "-o", help="write the reconstruction here")
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("sweep", help="PSNR/BER versus SNR or CBR, as CSV")
    _add_pipeline_flags(p)
    p.add_argument("--axis", choices=("snr_db", "cbr"), required=True)
    p.add_argument("--values", type=_float_list, required=True, help="comma-separated grid")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--csv", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("codebook-train", help="fit a VQ codebook on DCT token groups")
    p.add_argument("images", nargs="+")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--K", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=None, help="patch stride (default: tile)")
    p.add_argument("--flips", action="store_true", help="add mirrored images")
    p.add_argument("--block", type=int, default=32)
    p.add_argument("--coeffs-per-token", dest="coeffs_per_token", type=int, default=4)
    p.add_argument("--total-tokens", dest="total_tokens", type=int, default=256)
    p.add_argument("--key-count", dest="key_count", type=int, default=16)
    p.set_defaults(func=cmd_codebook_train)

    p = sub.add_parser("train-zeroout", help="zero-out training of the small autoencoder")
    p.add_argument("--data", help="patch dataset (default: bundled)")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--steps", type=int, default=zeroout.REFERENCE_STEPS)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--key-count", dest="key_count", type=int, default=4)
    p.add_argument("--tokens", type=int, default=16)
    p.add_argument("--token-dim", dest="token_dim", type=int, default=4)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-every", dest="log_every", type=int, default=0)
    p.set_defaults(func=cmd_train_zeroout)

    p = sub.add_parser("eval-gradient", help="reconstruction MSE versus kept-token count")
    p.add_argument("--model", required=True)
    p.add_argument("--data", help="patch dataset (default: bundled)")
    p.add_argument("--t-values", dest="t_values", type=_int_list, default=[4, 8, 12, 16])
    p.set_defaults(func=cmd_eval_gradient)

    p = sub.add_parser("mcs-calibrate", help="measure SNR thresholds and emit an MCS table")
    p.add_argument("--candidates", default=DEFAULT_CANDIDATES, help="m:r pairs, comma-separated")
    p.add_argument("--target-bler", dest="target_bler", type=float, default=0.1)
    p.add_argument("--blocks", type=int, default=200)
    p.add_argument("--info-len", dest="info_len", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_mcs_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleBudgetError as exc:
        print(f"tokenlink: infeasible budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ImageFormatError, OSError) as exc:
        print(f"tokenlink: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, TrainingError, ValueError) as exc:
        print(f"tokenlink: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
