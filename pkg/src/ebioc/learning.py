"""Maximum-likelihood cost training by analysis-by-synthesis.

Each iteration synthesizes trajectories under the current cost (Langevin
sampling, gradient descent, or iLQR), then moves the parameters along the
statistical difference between synthesized and observed trajectories:

    grad = mean_i [ dC/dtheta(synth_i) - dC/dtheta(expert_i) ]
    theta <- theta + lr_t * grad        (Adam ascent, lr decayed per step)

For the linear cost this gradient is exactly the mean feature difference,
so at convergence the solver-optimal features match the expert features
on average (moment matching).

The engine is shared: single-agent training wraps each demonstration as a
one-agent scene; the multi-agent and cooperative trainers plug in their
own synthesis hooks.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import cost as C
from . import features as F
from . import problem as P
from .optim import AdamState, adam_step
from .rng import substream
from .sampler import SamplerConfig, solve
from .types import Demonstration, StructuralError

DEFAULT_LR = {"linear": 0.1, "mlp": 5e-3, "cnn": 5e-3}
DEFAULT_DECAY = {"linear": 0.999, "mlp": 1.0, "cnn": 0.999}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 1024
    samples_per_demo: int = 1  # copies averaged in the synthesis step
    lr: float | None = None  # None = per-kind default
    lr_decay: float | None = None
    lr_schedule: str = "exponential"  # or "robbins_monro"
    beta1: float = 0.5
    beta2: float = 0.5
    adam_eps: float = 1e-8
    seed: int = 0
    goal_mode: str = P.GOAL_FROM_ENV
    init: str = "zeros"  # chain initialization: "zeros" or "generator"
    generator_updates: int = 5
    generator_lr: float = 2e-3
    generator_decay: float = 0.998
    generator_optimizer: str = "adam"
    workers: int = 1
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.samples_per_demo < 1:
            raise ValueError("samples_per_demo must be >= 1")
        if self.lr is not None and not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.init not in ("zeros", "generator"):
            raise ValueError(f"unknown chain init {self.init!r}")
        if self.lr_schedule not in ("exponential", "robbins_monro"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")

    def resolve_lr(self, kind: str) -> tuple[float, float]:
        lr = self.lr if self.lr is not None else DEFAULT_LR[kind]
        decay = self.lr_decay if self.lr_decay is not None else DEFAULT_DECAY[kind]
        return lr, decay


@dataclass
class TrainTrace:
    energy_gap: list = field(default_factory=list)  # mean C(synth) - C(obs) per epoch
    moment_gap: list = field(default_factory=list)  # (10,) |mean phi_synth - mean phi_obs|
    eval_metrics: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # parameter vectors per epoch

    @property
    def epochs(self) -> int:
        return len(self.energy_gap)

    def log_rows(self) -> list:
        rows = []
        for i in range(self.epochs):
            ev = self.eval_metrics[i] or {}
            rows.append({
                "epoch": i,
                "moment_gap": float(np.max(self.moment_gap[i])),
                "energy_gap": float(self.energy_gap[i]),
                "rmse_avg": ev.get("avg_rmse_overall"),
                "rmse_min": ev.get("min_rmse_overall"),
                "missing_rate": ev.get("missing_rate"),
                "wall_time": float(self.wall_time[i]),
            })
        return rows


@dataclass
class AgentItem:
    """One agent of one scene, precompiled for training."""

    prob: P.Problem
    expert_states: np.ndarray
    expert_controls: np.ndarray
    expert_phi: np.ndarray | None = None  # raw feature matrix, filled by the engine


@dataclass
class SceneSynthesis:
    """What a synthesis hook returns for one scene."""

    agent_phis: list  # per agent: list of M raw feature matrices (T, 10)
    agent_energies: list  # per agent: mean synthesized energy over copies
    refined_controls: list  # per agent: (T, 2) raw controls of the first copy
    xi: np.ndarray | None = None  # generator noise used for initialization


def estimate_likelihood_grad(model: C.CostModel, observed, synthesized) -> np.ndarray:
    """Stochastic likelihood-ascent direction.

    `observed` and `synthesized` are aligned lists whose entries are
    normalized feature matrices (T, 10); a synthesized entry may also be a
    list of M copies, which are averaged. For the linear cost the result
    is exactly mean(phi_synth) - mean(phi_obs).
    """
    if len(observed) != len(synthesized):
        raise StructuralError(
            f"observed batch has {len(observed)} items, synthesized {len(synthesized)}"
        )
    if len(observed) == 0:
        raise StructuralError("empty batch")
    grad = np.zeros(model.n_params)
    for phi_obs, phi_syn in zip(observed, synthesized):
        copies = phi_syn if isinstance(phi_syn, list) else [phi_syn]
        g_syn = np.zeros(model.n_params)
        for phi in copies:
            g_syn += model.param_grad(phi)
        g_syn /= len(copies)
        grad += g_syn - model.param_grad(phi_obs)
    return grad / len(observed)


def demo_to_item(demo: Demonstration, cfg: TrainConfig, variant=None, bounds=None) -> AgentItem:
    prob = P.from_demonstration(demo, goal_mode=cfg.goal_mode, variant=variant, bounds=bounds)
    return AgentItem(
        prob=prob,
        expert_states=demo.expert.states,
        expert_controls=demo.expert.controls.values,
    )


def single_agent_synthesizer(scene, model, generator, cfg: TrainConfig, epoch: int, index: int):
    """Default synthesis hook: independent chains per copy for one demo."""
    from . import generator as G

    item = scene[0]
    xi = None
    init = None
    if cfg.init == "generator":
        rng_xi = substream(cfg.seed, "xi", epoch, index)
        xi = rng_xi.standard_normal((item.prob.horizon, G.NOISE_DIM))
        init_controls, _ = G.generate(generator, item.prob, xi)
        init = init_controls
    phis = []
    energies = []
    refined = None
    for copy in range(cfg.samples_per_demo):
        rng = substream(cfg.seed, "chain", epoch, index, copy)
        result = solve(model, init, item.prob, cfg.sampler, rng)
        phi = F.frame_feature_matrix(result.trajectory.states, result.controls.values, item.prob)
        phis.append(phi)
        energies.append(result.energy_trace[-1])
        if copy == 0:
            refined = result.controls.values
    return SceneSynthesis(
        agent_phis=[phis],
        agent_energies=[float(np.mean(energies))],
        refined_controls=[refined],
        xi=xi,
    )


def run_training(scenes, model: C.CostModel, cfg: TrainConfig, generator=None,
                 synthesize_fn=None, eval_fn=None):
    """Shared training engine over a list of scenes (lists of AgentItems).

    Returns (model, generator, trace). Synthesis across a batch runs in a
    worker pool when cfg.workers > 1; per-scene RNG substreams and an
    ordered reduction keep results identical for any worker count.
    """
    from . import generator as G

    if synthesize_fn is None:
        synthesize_fn = single_agent_synthesizer
    n = len(scenes)
    if n == 0:
        raise ValueError("empty training set")

    for scene in scenes:
        for item in scene:
            if item.expert_phi is None:
                item.expert_phi = F.frame_feature_matrix(
                    item.expert_states, item.expert_controls, item.prob
                )

    lr0, decay = cfg.resolve_lr(model.kind)
    adam = AdamState.zeros(model.n_params, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    gen_adam = None
    trace = TrainTrace()
    iteration = 0

    for epoch in range(cfg.epochs):
        t_epoch = time.perf_counter()
        perm = substream(cfg.seed, "shuffle", epoch).permutation(n)
        epoch_obs_agg = np.zeros(F.N_FEATURES)
        epoch_syn_agg = np.zeros(F.N_FEATURES)
        epoch_energy_gap = 0.0
        epoch_agents = 0

        for start in range(0, n, cfg.batch_size):
            batch_idx = perm[start:start + cfg.batch_size]
            scenes_batch = [scenes[i] for i in batch_idx]

            def synth(pair):
                i, scene = pair
                return synthesize_fn(scene, model, generator, cfg, epoch, int(i))

            pairs = list(zip(batch_idx, scenes_batch))
            if cfg.workers > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    results = list(pool.map(synth, pairs))
            else:
                results = [synth(p) for p in pairs]

            observed = []
            synthesized = []
            for scene, res in zip(scenes_batch, results):
                for item, phis, energy in zip(scene, res.agent_phis, res.agent_energies):
                    phi_obs_n = model.normalizer.normalize_features(item.expert_phi)
                    copies_n = [model.normalizer.normalize_features(p) for p in phis]
                    observed.append(phi_obs_n)
                    synthesized.append(copies_n)
                    epoch_obs_agg += phi_obs_n.sum(axis=0)
                    epoch_syn_agg += np.mean([p.sum(axis=0) for p in copies_n], axis=0)
                    obs_energy = model.value(phi_obs_n)
                    epoch_energy_gap += energy - obs_energy
                    epoch_agents += 1

            grad = estimate_likelihood_grad(model, observed, synthesized)
            if cfg.lr_schedule == "robbins_monro":
                lr_t = lr0 / (1.0 + iteration)
            else:
                lr_t = lr0 * decay**iteration
            upd, adam = adam_step(adam, -grad, lr_t)  # ascend the likelihood
            new_params = model.params + upd
            if not np.all(np.isfinite(new_params)):
                raise FloatingPointError(
                    f"non-finite parameter update at epoch {epoch}, iteration {iteration}"
                )
            model = model.with_params(new_params)
            iteration += 1

            if generator is not None and cfg.generator_updates > 0:
                glr = cfg.generator_lr * cfg.generator_decay**(iteration - 1)
                xi_batch = [r.xi for r in results]
                refined_batch = [r.refined_controls[0] for r in results]
                prob_batch = [scene[0].prob for scene in scenes_batch]
                for _ in range(cfg.generator_updates):
                    generator, gen_adam = G.generator_update(
                        generator, xi_batch, refined_batch, prob_batch, glr,
                        optimizer=cfg.generator_optimizer, adam_state=gen_adam,
                    )

        trace.energy_gap.append(epoch_energy_gap / max(epoch_agents, 1))
        trace.moment_gap.append(np.abs(epoch_syn_agg - epoch_obs_agg) / max(epoch_agents, 1))
        trace.eval_metrics.append(eval_fn(model, epoch) if eval_fn is not None else None)
        trace.wall_time.append(time.perf_counter() - t_epoch)
        trace.snapshots.append(model.params.copy())

    return model, generator, trace


def prepare_dataset(demos, cfg: TrainConfig, variant=None, bounds=None):
    """Demonstrations -> (scenes, normalizer); the normalizer is fitted on
    exactly this split."""
    items = [demo_to_item(d, cfg, variant=variant, bounds=bounds) for d in demos]
    for it in items:
        it.expert_phi = F.frame_feature_matrix(it.expert_states, it.expert_controls, it.prob)
    normalizer = F.fit_normalizer_from_matrices(
        [it.expert_phi for it in items],
        [it.expert_controls for it in items],
    )
    return [[it] for it in items], normalizer


def train_ebm(demos, model_kind: str, cfg: TrainConfig, variant=None, bounds=None,
              eval_fn=None, model_kwargs=None):
    """Train a cost model on demonstrations (Algorithm: analysis by synthesis).

    Returns (model, trace).
    """
    scenes, normalizer = prepare_dataset(demos, cfg, variant=variant, bounds=bounds)
    rng_init = substream(cfg.seed, "theta-init")
    model = C.create_model(model_kind, rng=rng_init, normalizer=normalizer,
                           **(model_kwargs or {}))
    if cfg.sampler.kind == "ilqr" and not model.markovian:
        raise C.UnsupportedModelError("ilqr synthesis cannot drive a non-Markovian (cnn) cost")
    model, _, trace = run_training(scenes, model, cfg, eval_fn=eval_fn)
    return model, trace
