"""Main entry point for windfractal."""

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from src.config import Config, ConfigError, PipelineConfig, load_pipeline_config
from src.elm import ElmError
from src.pipeline import (
    EXIT_ALL_FAILED,
    EXIT_CONFIG,
    EXIT_OK,
    exit_status,
    map_parameters,
    run_pipeline,
    run_stations,
)
from src.synthgen import CascadeSpec, binomial_cascade, fractional_noise, white_noise
from src.timeseries import IngestError, load_station_catalog
from src.writers import OutputWriter

OUTPUT_HELP = """\
outputs (below --output):
  stations/<id>/gaps.jsonl         interpolated or rejected days, one JSON object per line
  stations/<id>/decomposition.csv  date, trend, seasonal, remainder
  stations/<id>/remainder.csv      STL remainder in the ingestion CSV layout
  stations/<id>/fit_dist.json      fitted Weibull, Gamma and GEV ranked by KL divergence
  stations/<id>/mfdfa.json         F_q(s), h(q), tau(q), f(alpha) and the H, W, A summary
  stations/<id>/fluctuation.csv    F_q(s) matrix, one row per q
  stations/<id>/surrogate.json     shuffled-surrogate statistics and z-scores
  summary.csv / summary.json       one row per successful station
  histograms.csv                   fixed-bin counts of H, W, A: original vs shuffled means
  maps/<parameter>.asc             ESRI ASCII grids, maps/maps.json model sidecar
  manifest.json                    every output file with its sha256 and station status

exit codes: 0 success, 1 configuration error, 2 every station failed
"""


def setup_logging(log_level: str = "INFO", output_dir: Path | None = None) -> None:
    """Setup logging configuration."""
    handlers = [logging.StreamHandler(sys.stdout)]

    # Add file handler if output directory exists
    output_dir = output_dir or Config.OUTPUT_DIR
    if output_dir.exists():
        handlers.append(logging.FileHandler(output_dir / "windfractal.log"))

    logging.basicConfig(
        level=getattr(logging, log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


logger = logging.getLogger(__name__)


def station_inputs(path: Path) -> list[Path]:
    """A single station CSV, or every CSV in a directory."""
    if path.is_file():
        return [path]
    if path.is_dir():
        files = sorted(p for p in path.glob("*.csv") if p.is_file())
        if files:
            return files
    raise ConfigError(f"No station CSV files at {path}")


def run_stage(cfg: PipelineConfig, input_path: Path, stages: tuple[str, ...]) -> int:
    """Run some of the per-station stages on one file or a directory of files."""
    files = station_inputs(input_path)
    logger.info(f"Running {', '.join(stages)} on {len(files)} stations")
    results = run_stations(files, cfg, stages)
    for result in results:
        if result.status == "ok":
            logger.info(f"{result.station_id}: wrote {len(result.files)} files")
    return exit_status(results)


def run_map(cfg: PipelineConfig, summary_path: Path, catalog_path: Path | None) -> int:
    """Map the parameters of an existing summary table onto a grid."""
    catalog_path = catalog_path or cfg.catalog
    if catalog_path is None:
        raise ConfigError("map needs a station catalog (--catalog or the config file)")
    if not summary_path.is_file():
        raise ConfigError(f"Summary table {summary_path} not found")

    rows = pd.read_csv(summary_path, dtype={"station_id": str}).to_dict("records")
    try:
        catalog = load_station_catalog(catalog_path)
        sidecar = map_parameters(rows, catalog, cfg.elm, OutputWriter(cfg.output_dir))
    except (ElmError, IngestError) as e:
        logger.error(f"Mapping failed: {e}")
        return EXIT_ALL_FAILED
    logger.info(f"Mapped {len(sidecar['parameters'])} parameters")
    return EXIT_OK


def run_synth(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    """Write one synthetic series as a station CSV."""
    seed = args.seed if args.seed is not None else cfg.base_seed
    if args.kind == "cascade":
        ts = binomial_cascade(CascadeSpec(levels=args.levels, a=args.a, seed=seed), args.station_id)
    elif args.kind == "fgn":
        ts = fractional_noise(args.hurst, args.length, seed, args.station_id)
    else:
        ts = white_noise(args.length, seed, args.station_id)

    writer = OutputWriter(cfg.output_dir)
    path = writer.write_series(f"{ts.station_id}.csv", ts, cfg.csv.value_column)
    logger.info(f"Wrote {len(ts)} synthetic samples to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="windfractal - multifractal analysis of wind-speed station records",
        epilog=OUTPUT_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", type=Path, help="JSON pipeline configuration file")
    parser.add_argument("--seed", type=int, help="Base seed for surrogates, ELM and synth")
    parser.add_argument("--jobs", type=int, help="Number of stations processed in parallel")
    parser.add_argument("--output", type=Path, help="Output directory")
    parser.add_argument(
        "--log-level",
        default=Config.LOG_LEVEL,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Set logging level",
    )

    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Full pipeline over a directory of station CSVs")
    run.add_argument("input", type=Path, nargs="?", help="Input directory (overrides config)")

    for name, help_text in (
        ("decompose", "STL decomposition of station series"),
        ("fit-dist", "Rank Weibull, Gamma and GEV fits by KL divergence"),
        ("mfdfa", "MFDFA of the STL remainder"),
        ("surrogate", "MFDFA plus shuffled-surrogate significance"),
    ):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("input", type=Path, help="Station CSV file or directory")
        if name in ("mfdfa", "surrogate"):
            sub.add_argument(
                "--no-stl", action="store_true", help="Analyze the daily series directly"
            )
        if name == "surrogate":
            sub.add_argument("--n", type=int, help="Number of surrogates")

    map_cmd = commands.add_parser("map", help="ELM maps of H, W, A from a summary table")
    map_cmd.add_argument("summary", type=Path, help="summary.csv written by run")
    map_cmd.add_argument("--catalog", type=Path, help="Station catalog CSV (station_id, x, y)")
    map_cmd.add_argument("--resolution", type=float, help="Grid cell size")

    synth = commands.add_parser("synth", help="Write a synthetic test series")
    synth.add_argument("kind", choices=["cascade", "fgn", "white"])
    synth.add_argument("--levels", type=int, default=16, help="Cascade levels (length 2^levels)")
    synth.add_argument("--a", type=float, default=0.75, help="Cascade multiplier")
    synth.add_argument("--hurst", type=float, default=0.8, help="fGn Hurst exponent")
    synth.add_argument("--length", type=int, default=2**16, help="Series length")
    synth.add_argument("--station-id", default=None, help="Station id and file name")

    return parser


def dispatch(args: argparse.Namespace) -> int:
    """Load configuration and run one subcommand; returns the exit code."""
    input_dir = None
    if args.command == "run":
        input_dir = args.input
    elif args.command in ("decompose", "fit-dist", "mfdfa", "surrogate"):
        input_dir = args.input
    elif args.command == "map":
        input_dir = args.summary.parent
    elif args.command == "synth":
        input_dir = Path(".")
        args.station_id = args.station_id or args.kind

    cfg = load_pipeline_config(
        args.config, input_dir=input_dir, output_dir=args.output, seed=args.seed, jobs=args.jobs
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    setup_logging(args.log_level, cfg.output_dir)

    if args.command == "run":
        outcome = run_pipeline(cfg)
        logger.info(
            f"Run finished: {len(outcome.manifest.succeeded)} stations ok, "
            f"{len(outcome.manifest.failed)} failed"
        )
        return outcome.exit_code
    if args.command == "decompose":
        cfg.stl_enabled = True
        return run_stage(cfg, args.input, ("decompose",))
    if args.command == "fit-dist":
        return run_stage(cfg, args.input, ("fit-dist",))
    if args.command in ("mfdfa", "surrogate"):
        if args.no_stl:
            cfg.stl_enabled = False
        stages = ("mfdfa",)
        if args.command == "surrogate":
            if args.n is not None:
                cfg.n_surrogates = args.n
            stages = ("mfdfa", "surrogate")
        return run_stage(cfg, args.input, stages)
    if args.command == "map":
        if args.resolution is not None:
            cfg.elm.resolution = args.resolution
        return run_map(cfg, args.summary, args.catalog)
    return run_synth(args, cfg)


def main(argv: list[str] | None = None) -> None:
    """Main entry point."""
    args = build_parser().parse_args(argv)

    try:
        Config.validate()
        code = dispatch(args)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(EXIT_OK)
    except ConfigError as e:
        logger.error(str(e))
        sys.exit(EXIT_CONFIG)
    except ValueError as e:
        # Invalid synth parameters and similar argument errors
        logger.error(f"Invalid arguments: {e}")
        sys.exit(EXIT_CONFIG)
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        sys.exit(EXIT_ALL_FAILED)

    sys.exit(code)


if __name__ == "__main__":
    main()
