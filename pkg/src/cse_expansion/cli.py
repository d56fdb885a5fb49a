"""``cse-expansion`` command line."""

from __future__ import annotations

import logging
from typing import Any, Callable

import click

from cse_expansion import __version__
from cse_expansion.exceptions import CseExpansionError
from cse_expansion.pipelines import RunConfig, run, write_report


def _parse_r(ctx: click.Context, param: click.Parameter, value: str | None):
    if value is None:
        return None
    try:
        return tuple(float(v) for v in value.replace(",", " ").split())
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of numbers, got {value!r}")


def _run_options(fn: Callable) -> Callable:
    options = [
        click.option(
            "--config",
            "config_file",
            type=click.Path(exists=True, dir_okay=False),
            help="YAML run configuration; flags override its values.",
        ),
        click.option("--r", "r", callback=_parse_r, help="Bond lengths in angstrom, e.g. 1.0,1.4."),
        click.option("--chain", type=click.IntRange(min=2), help="Number of hydrogen atoms."),
        click.option("--basis", type=click.Path(exists=True, dir_okay=False), help="Basis file."),
        click.option("--seed", type=int, help="Seed for the initial expansion coefficients."),
        click.option("--format", "fmt", type=click.Choice(["json", "csv"]), help="Report format."),
        click.option("--out", type=click.Path(dir_okay=False), help="Write the report here."),
        click.option(
            "--scheduler",
            type=click.Choice(["threads", "processes", "sync"]),
            help="dask scheduler for the per-R work.",
        ),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _execute(pipeline: str, config_file: str | None, **values: Any) -> None:
    values = {k: v for k, v in values.items() if v is not None}
    if "fmt" in values:
        values["format"] = values.pop("fmt")
    try:
        if config_file is not None:
            cfg = RunConfig.from_file(config_file, pipeline=pipeline, **values)
        else:
            cfg = RunConfig(pipeline=pipeline, **values)
    except (CseExpansionError, TypeError) as err:
        raise click.UsageError(str(err))

    try:
        report = run(cfg)
    except CseExpansionError as err:
        raise click.ClickException(f"{type(err).__name__}: {err}")
    text = write_report(report, cfg.format, cfg.out)
    if cfg.out is None:
        click.echo(text, nl=False)
    if report["errors"]:
        for error in report["errors"]:
            click.echo(f"R={error['r']:g}: {error['error']}", err=True)
        click.get_current_context().exit(1)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="cse-expansion")
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output.")
def main(verbose: int) -> None:
    """Two-body product expansions of hydrogen-chain wave functions."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


_m_option = click.option("--m", "m", type=click.IntRange(min=1), help="Number of layers M.")


@main.command("scf-fci")
@_run_options
def scf_fci(**kwargs: Any) -> None:
    """Hartree-Fock, MP2 and full-CI energies per bond length."""
    _execute("scf-fci", **kwargs)


@main.command("dl-table")
@_run_options
def dl_table(**kwargs: Any) -> None:
    """Dalgarno-Lewis residuals for one- and two-body operators."""
    _execute("dl-table", **kwargs)


@main.command("cse-scan")
@_run_options
@_m_option
@click.option(
    "--plot-data",
    type=click.Path(dir_okay=False),
    help="Also write HF/MP2/CCSD(T)/CSE(2)/FCI curves here.",
)
def cse_scan(**kwargs: Any) -> None:
    """CSE(1) and CSE(2) ground-state energy errors per bond length."""
    _execute("cse-scan", **kwargs)


@main.command("excited")
@_run_options
@_m_option
@click.option("--n-states", type=click.IntRange(min=1), help="Number of target states.")
@click.option(
    "--multiplicity",
    type=click.IntRange(min=1),
    help="Target the lowest states of this multiplicity, ground state included.",
)
def excited(**kwargs: Any) -> None:
    """Excited states from promoted references, identified against full CI."""
    _execute("excited", **kwargs)
