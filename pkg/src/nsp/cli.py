"""``nsp`` command line: generate, fit, eval, urns, oracle."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_config
from .domain import GammaWeightPrior, RngStream
from .evaluation import (
    SpeckledMask,
    compare_cluster_count,
    enumerate_posterior,
    heldout_predictive_ll,
    masked_measure_for_fit,
    posterior_co_occupancy,
)
from .generate import GeneratedDataset, sample_nsp, sample_with_background
from .gibbs import ChainRecord, run_chain
from .parallel import ShardPlan, run_parallel_chain
from .partitions import (
    MAX_ENUMERATION,
    UrnConfig,
    VCoefficientTable,
    enumerate_background_partitions,
    enumerate_partitions,
    log_eppf,
    log_p_n,
    log_v_coefficient,
    sample_exact_partition_labels,
    sample_partition_labels,
)

log = logging.getLogger("nsp")

CONSTRUCTIONS = ["v1", "v2", "v3", "v4", "v5"]


def _setup_logging():
    level = os.environ.get("NSP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _config(path, overrides: dict) -> RunConfig:
    """Load the config file (or defaults) and apply command-line overrides."""
    try:
        if path is None:
            base = {}
        else:
            base = load_config(path).model_dump(exclude_unset=True)
        for key, val in overrides.items():
            if val is None:
                continue
            if key == "mode":
                base.setdefault("sampler", {})
                base["sampler"] = dict(base["sampler"], mode=val)
            else:
                base[key] = val
        if "prior" not in base:
            raise ConfigError("prior: field required (give alpha, beta, nu_bar in --config)")
        return parse_config(base)
    except ConfigError as exc:
        click.echo(f"config error:\n{exc}", err=True)
        sys.exit(2)


def _load_dataset(path) -> GeneratedDataset:
    try:
        return GeneratedDataset.load(path)
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"cannot read dataset {path}: {exc}")


def _write_csv(rows: list[dict], out):
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    finally:
        if out:
            fh.close()


config_opt = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                          help="JSON run configuration.")
seed_opt = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed.")


@click.group()
def main():
    """Neyman-Scott processes with gamma weights."""
    _setup_logging()


@main.command()
@config_opt
@seed_opt
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--construction", type=click.Choice(CONSTRUCTIONS), default=None)
def generate(config_path, seed, out, construction):
    """Simulate a dataset and write it as JSON."""
    cfg = _config(config_path, {"seed": seed, "construction": construction})
    model, prior, domain = cfg.build_model(), cfg.build_prior(), cfg.build_domain()
    background = cfg.build_background(model)
    gen = cfg.rng().child("generate").gen
    if background.rate > 0:
        ds = sample_with_background(model, prior, background, domain, gen, cfg.truncate, cfg.construction)
    else:
        ds = sample_nsp(model, prior, domain, gen, cfg.construction, cfg.truncate)
    try:
        ds.save(out)
    except OSError as exc:
        raise click.ClickException(f"cannot write {out}: {exc}")
    click.echo(f"wrote {ds.n_points} points in {len(ds.cluster_sizes)} clusters to {out}")


@main.command()
@config_opt
@seed_opt
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Held-out regions removed before fitting.")
@click.option("--shards", type=click.IntRange(min=1), default=None)
@click.option("--chains", type=click.IntRange(min=1), default=None)
@click.option("--samples", type=click.IntRange(min=1), default=None)
@click.option("--mode", type=click.Choice(["nsp", "dpmm-limit"]), default=None)
def fit(config_path, seed, data_path, out, mask_path, shards, chains, samples, mode):
    """Run collapsed Gibbs chains; one JSON-lines file per chain."""
    cfg = _config(config_path, {"seed": seed, "shards": shards, "chains": chains, "samples": samples,
                                "mode": mode})
    ds = _load_dataset(data_path)
    model, prior, domain = cfg.build_model(), cfg.build_prior(), cfg.build_domain()
    if ds.domain is not None and ds.domain != domain:
        log.warning("dataset window %s differs from config window %s; using the config", ds.domain, domain)
    background = cfg.build_background(model)
    points = ds.points
    masked = 0.0
    if mask_path:
        mask = SpeckledMask.load(mask_path, domain)
        keep = ~mask.split(points)
        points = [p for p, k in zip(points, keep) if k]
        masked = masked_measure_for_fit(mask)
    outside = [p for p in points if not domain.contains(p.x)]
    if outside:
        raise click.ClickException(f"{len(outside)} points lie outside the configured window")
    sampler = cfg.build_sampler(masked)
    schedule = cfg.build_schedule()
    Path(out).mkdir(parents=True, exist_ok=True)
    base = cfg.rng().child("fit")
    for j in range(cfg.chains):
        rng = base.child("chain", j)
        if cfg.shards > 1:
            plan = ShardPlan.equal(domain, cfg.shards, cfg.shard_axis)
            rec = run_parallel_chain(points, model, prior, background, domain, plan, schedule, cfg.samples,
                                     rng, sampler, rescale_lbar=cfg.sampler.rescale_lbar)
        else:
            rec = run_chain(points, model, prior, background, domain, schedule, cfg.samples, rng, sampler)
        rec.meta.update({"chain": j, "seed": cfg.seed, "data": str(data_path), "masked_measure": masked})
        path = Path(out) / f"chain_{j}.jsonl"
        rec.to_jsonl(path)
        rec.write_summary_csv(Path(out) / f"chain_{j}_summary.csv")
        click.echo(f"chain {j}: {len(rec)} samples, mean |C| = {rec.n_clusters.mean():.2f} -> {path}")


@main.command(name="eval")
@config_opt
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--chain", "chain_paths", type=click.Path(exists=True, dir_okay=False), multiple=True,
              required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--truth/--no-truth", default=False, help="Score against the dataset's true labels.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Metrics CSV (stdout if omitted).")
def evaluate(config_path, data_path, chain_paths, mask_path, truth, out):
    """Co-occupancy, cluster counts and held-out likelihood."""
    if not truth and mask_path is None:
        raise click.UsageError("nothing to evaluate: pass --truth and/or --mask")
    ds = _load_dataset(data_path)
    chains = [ChainRecord.from_jsonl(p) for p in chain_paths]
    rows = []
    if truth:
        k_true = len(ds.cluster_sizes)
        for p, c in zip(chain_paths, chains):
            s = compare_cluster_count([c], k_true)
            rows.append({"chain": p, "metric": "co_occupancy", "value": posterior_co_occupancy(c, ds.z)})
            for k, v in s.to_row().items():
                rows.append({"chain": p, "metric": f"n_clusters_{k}", "value": v})
        pooled = compare_cluster_count(chains, k_true)
        for k, v in pooled.to_row().items():
            rows.append({"chain": "pooled", "metric": f"n_clusters_{k}", "value": v})
    if mask_path:
        if config_path is None:
            raise click.UsageError("--mask needs --config to rebuild the model")
        cfg = _config(config_path, {})
        model, domain = cfg.build_model(), cfg.build_domain()
        background = cfg.build_background(model)
        mask = SpeckledMask.load(mask_path, domain)
        for p, c in zip(chain_paths, chains):
            res = heldout_predictive_ll(c, ds.points, mask, model, background)
            for k, v in res.items():
                rows.append({"chain": p, "metric": f"heldout_{k}", "value": v})
    _write_csv(rows, out)


@main.command()
@seed_opt
@click.option("--n", "n_points", type=click.IntRange(min=1), default=100)
@click.option("--draws", type=click.IntRange(min=1), default=1000)
@click.option("--beta", type=float, default=2.0)
@click.option("--alphas", default="0,1,100,10000", help="Comma-separated shapes; 0 is the CRP limit.")
@click.option("--gammas", default="1,10", help="Comma-separated concentrations.")
@click.option("--examples", type=click.IntRange(min=0), default=1, help="Example labelings per setting.")
@click.option("--exact/--sequential", default=False,
              help="Exact p(C|N) draws via the latent count, or the constant-ratio sequential urn.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def urns(seed, n_points, draws, beta, alphas, gammas, examples, exact, out):
    """Cluster-count statistics of urn-sampled partitions over an (alpha, gamma) grid.

    For alpha > 0 the latent rate is set so that alpha L̄ (beta/(1+beta))^alpha
    equals gamma on a unit-measure window. The sequential urn keeps that
    new-cluster weight fixed at every step; --exact is limited to settings
    where L̄ is moderate (small alpha).
    """
    rng = RngStream(seed or 0).child("urns")
    rows = []
    for g in [float(v) for v in gammas.split(",")]:
        for a in [float(v) for v in alphas.split(",")]:
            if a == 0:
                config = UrnConfig("dpmm-limit", gamma=g)
            else:
                config = UrnConfig.nsp_concentration(a, beta, g)
            sampler = sample_exact_partition_labels if exact else sample_partition_labels
            try:
                labels = sampler(n_points, config, draws, rng.child(a, g).gen)
            except ValueError as exc:
                raise click.BadParameter(f"alpha={a}: {exc}", param_hint="--alphas")
            counts = labels.max(axis=1)
            hist = np.bincount(counts, minlength=1)
            row = {"alpha": a, "gamma": g, "n": n_points, "draws": draws,
                   "mean_clusters": float(counts.mean()), "sd_clusters": float(counts.std(ddof=1)),
                   "histogram": json.dumps({int(k): int(v) for k, v in enumerate(hist) if v})}
            for e in range(min(examples, draws)):
                row[f"example_{e}"] = " ".join(str(int(v)) for v in labels[e])
            rows.append(row)
    _write_csv(rows, out)


@main.group()
def oracle():
    """Exact partition calculus for scripting."""


def _prior_opts(f):
    f = click.option("--alpha", type=float, required=True)(f)
    f = click.option("--beta", type=float, required=True)(f)
    f = click.option("--lbar", type=float, required=True, help="Expected number of latent events.")(f)
    return f


def _table(alpha, beta, lbar) -> VCoefficientTable:
    try:
        return VCoefficientTable(GammaWeightPrior(alpha, beta, lbar), lbar)
    except ValueError as exc:
        raise click.BadParameter(str(exc))


@oracle.command("partitions")
@click.option("--n", "n_points", type=click.IntRange(min=1), required=True)
@click.option("--background", is_flag=True, help="Include a background block.")
@_prior_opts
def oracle_partitions(n_points, background, alpha, beta, lbar):
    """Enumerate partitions of n points with their conditional probabilities p(C | N)."""
    if n_points > MAX_ENUMERATION:
        raise click.BadParameter(f"n must be <= {MAX_ENUMERATION}", param_hint="--n")
    table = _table(alpha, beta, lbar)
    parts = enumerate_background_partitions(n_points) if background else enumerate_partitions(n_points)
    if background:
        for part in parts:
            click.echo(" ".join(str(int(v)) for v in part.labels()))
        return
    lpn = log_p_n(table, n_points)
    total = 0.0
    for part in parts:
        p = math.exp(log_eppf(part, table) - lpn)
        total += p
        click.echo(f"{' '.join(str(int(v)) for v in part.labels())}\t{p:.12g}")
    click.echo(f"# total {total:.12g}")


@oracle.command("vcoef")
@click.option("--n", "n_points", type=click.IntRange(min=0), required=True)
@click.option("--k", "k_clusters", type=click.IntRange(min=0), required=True)
@_prior_opts
def oracle_vcoef(n_points, k_clusters, alpha, beta, lbar):
    """log V_{N,K}."""
    if k_clusters > n_points:
        raise click.BadParameter("K cannot exceed N", param_hint="--k")
    click.echo(f"{log_v_coefficient(_table(alpha, beta, lbar), n_points, k_clusters):.15g}")


@oracle.command("pn")
@click.option("--n", "n_points", type=click.IntRange(min=0), required=True)
@_prior_opts
def oracle_pn(n_points, alpha, beta, lbar):
    """log p(N)."""
    click.echo(f"{log_p_n(_table(alpha, beta, lbar), n_points):.15g}")


@oracle.command("posterior")
@config_opt
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
def oracle_posterior(config_path, data_path):
    """Exact posterior over labelings of a tiny dataset (at most 3 points)."""
    cfg = _config(config_path, {})
    ds = _load_dataset(data_path)
    model, prior, domain = cfg.build_model(), cfg.build_prior(), cfg.build_domain()
    try:
        post = enumerate_posterior(ds.points, model, prior, cfg.build_background(model), domain,
                                   cfg.sampler.mode, cfg.sampler.dpmm_gamma)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    for key, p in sorted(post.items(), key=lambda kv: -kv[1]):
        click.echo(f"{' '.join(str(v) for v in key)}\t{p:.12g}")


if __name__ == "__main__":
    main()
