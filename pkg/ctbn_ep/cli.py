# SPDX-FileCopyrightText: 2022 VMware Inc
#
# SPDX-License-Identifier: MIT

"""
Command line front end. Reports go to stdout (or ``--output``), diagnostics
to stderr; the exit status follows ``CtbnError.exit_code``.
"""

import functools
import json
import logging
import sys
from typing import Any, Dict, Optional

import click

from ctbn_ep.clustergraph import ClusterTopology
from ctbn_ep.errors import CtbnError, ModelValidationError
from ctbn_ep.formats import (
    evidence_from_dict,
    load_json,
    model_from_dict,
    query_from_dict,
    render_report,
    trajectories_to_dict,
)
from ctbn_ep.inference import (
    compare_report,
    ep_report,
    ep_stats_report,
    exact_report,
    segments_for,
)
from ctbn_ep.model import state_count
from ctbn_ep.sampler import sample_trajectories

NOT_CONVERGED = 4

model_argument = click.argument(
    "model_file", type=click.Path(exists=True, dir_okay=False)
)
evidence_argument = click.argument(
    "evidence_file", type=click.Path(exists=True, dir_okay=False)
)
format_option = click.option(
    "--format",
    "fmt",
    type=click.Choice(["json", "text"]),
    default="json",
    show_default=True,
    help="Report format.",
)
output_option = click.option(
    "--output",
    type=click.Path(dir_okay=False, writable=True),
    default=None,
    help="Write the report to this file instead of stdout.",
)


def ep_options(func):
    """Options shared by every command that runs the EP filter."""
    for option in reversed(
        [
            click.option(
                "--tol", type=float, default=None, help="Sweep tolerance."
            ),
            click.option(
                "--max-iters",
                type=click.IntRange(min=1),
                default=None,
                help="Maximum sweeps per segment.",
            ),
            click.option(
                "--topology",
                "topology_file",
                type=click.Path(exists=True, dir_okay=False),
                default=None,
                help="Cluster graph JSON; a clique tree is built otherwise.",
            ),
            click.option(
                "--segments",
                type=click.IntRange(min=1),
                default=None,
                help="Split every evidence segment into this many pieces.",
            ),
        ]
    ):
        func = option(func)

    return func


def handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ModelValidationError as err:
            for violation in err.violations:
                click.echo(str(violation), err=True)
            sys.exit(err.exit_code)
        except CtbnError as err:
            click.echo(f"Error: {err}", err=True)
            sys.exit(err.exit_code)
        except (ValueError, OSError) as err:
            click.echo(f"Error: {err}", err=True)
            sys.exit(1)

    return wrapper


def _emit(
    report: Dict[str, Any], fmt: str = "json", output: Optional[str] = None
) -> None:
    text = render_report(report, fmt)
    if output is None:
        click.echo(text)
    else:
        with open(output, "w") as file_object:
            file_object.write(text + "\n")
        logging.debug(f"Report written to {output}")


def _topology(model, topology_file: Optional[str]):
    if topology_file is None:
        return None

    return ClusterTopology.from_dict(model, load_json(topology_file))


def _inputs(model_file: str, evidence_file: str):
    model = model_from_dict(load_json(model_file))
    return model, evidence_from_dict(load_json(evidence_file))


@click.group()
@click.option("--verbose", is_flag=True, help="Debug logging.")
def cli(verbose: bool):
    """Inference engine for continuous time Bayesian networks."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        datefmt="%H:%M:%S",
    )


@cli.command()
@model_argument
@handle_errors
def validate(model_file: str):
    """Checks a model file and lists every violation found."""
    model = model_from_dict(load_json(model_file))
    click.echo(
        f"{model_file}: valid, {len(model.variables)} variable(s), "
        f"{state_count(model.variables)} joint state(s)"
    )


@cli.group()
def exact():
    """Exact inference over the full joint space."""


@exact.command("query")
@model_argument
@evidence_argument
@click.argument("query_file", type=click.Path(exists=True, dir_okay=False))
@format_option
@output_option
@handle_errors
def exact_query(model_file, evidence_file, query_file, fmt, output):
    """Answers a query exactly."""
    model, evidence = _inputs(model_file, evidence_file)
    query = query_from_dict(load_json(query_file))
    _emit(exact_report(model, evidence, query), fmt, output)


@cli.group()
def ep():
    """Expectation propagation over a cluster graph."""


@ep.command("query")
@model_argument
@evidence_argument
@click.argument("query_file", type=click.Path(exists=True, dir_okay=False))
@ep_options
@format_option
@output_option
@handle_errors
def ep_query(
    model_file,
    evidence_file,
    query_file,
    tol,
    max_iters,
    topology_file,
    segments,
    fmt,
    output,
):
    """Answers a query with the EP filter and reports convergence."""
    model, evidence = _inputs(model_file, evidence_file)
    query = query_from_dict(load_json(query_file))
    report = ep_report(
        model,
        evidence,
        query,
        topology=_topology(model, topology_file),
        tol=tol,
        max_iters=max_iters,
        segments=segments_for(model, evidence, segments),
    )
    _emit(report, fmt, output)
    if not report["converged"]:
        sys.exit(NOT_CONVERGED)


@ep.command("stats")
@model_argument
@evidence_argument
@click.option(
    "--segment", type=click.IntRange(min=0), default=0, show_default=True
)
@ep_options
@format_option
@output_option
@handle_errors
def ep_stats(
    model_file,
    evidence_file,
    segment,
    tol,
    max_iters,
    topology_file,
    segments,
    fmt,
    output,
):
    """Expected sufficient statistics of every cluster on one segment."""
    model, evidence = _inputs(model_file, evidence_file)
    report = ep_stats_report(
        model,
        evidence,
        segment,
        topology=_topology(model, topology_file),
        tol=tol,
        max_iters=max_iters,
        segments=segments_for(model, evidence, segments),
    )
    _emit(report, fmt, output)
    if not report["converged"]:
        sys.exit(NOT_CONVERGED)


@cli.command()
@model_argument
@click.option("--n", "count", type=click.IntRange(min=1), default=1)
@click.option("--t-end", type=float, required=True)
@click.option("--seed", type=int, default=None)
@output_option
@handle_errors
def sample(model_file, count, t_end, seed, output):
    """Samples trajectories from the model on [0, t-end]."""
    model = model_from_dict(load_json(model_file))
    trajectories = sample_trajectories(model, count, t_end, seed)
    text = json.dumps(trajectories_to_dict(trajectories, seed), indent=2)
    if output is None:
        click.echo(text)
    else:
        with open(output, "w") as file_object:
            file_object.write(text + "\n")


@cli.command("compare")
@model_argument
@evidence_argument
@click.option(
    "--points", type=click.IntRange(min=1), default=60, show_default=True
)
@ep_options
@format_option
@output_option
@handle_errors
def compare_command(
    model_file,
    evidence_file,
    points,
    tol,
    max_iters,
    topology_file,
    segments,
    fmt,
    output,
):
    """KL divergence of the EP joint from the exact one at evenly spaced
    probe times."""
    model, evidence = _inputs(model_file, evidence_file)
    report = compare_report(
        model,
        evidence,
        points,
        topology=_topology(model, topology_file),
        tol=tol,
        max_iters=max_iters,
        segments=segments_for(model, evidence, segments),
    )
    _emit(report, fmt, output)
    if not report["converged"]:
        sys.exit(NOT_CONVERGED)


if __name__ == "__main__":
    cli()
