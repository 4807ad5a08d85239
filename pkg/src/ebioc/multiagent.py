"""Joint control of K agents sharing one cost function.

Every agent sees the other agents' current rollouts as obstacles, so the
joint energy is the sum of per-agent costs evaluated on a fully coupled
scene. The joint chain runs over the concatenated control space (K, T, 2)
and re-rolls all agents at every step, so interaction gradients flow both
ways through the obstacle-distance feature.

At K = 1 everything reduces bit-for-bit to the single-agent machinery.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import cost as C
from . import learning as L
from . import problem as P
from .dynamics import unroll_array
from .rng import substream
from .sampler import (ControlCodec, SamplerConfig, SolverResult, gd_chain,
                      langevin_chain)
from .types import (ControlSequence, Demonstration, StructuralError, Trajectory,
                    demonstration_from_dict, demonstration_to_dict)

K_MAX_DEFAULT = 64


@dataclass(frozen=True)
class JointScene:
    """K agents, each with its own history, environment view, and expert."""

    agents: tuple

    def __post_init__(self):
        agents = tuple(self.agents)
        if not 1 <= len(agents) <= K_MAX_DEFAULT:
            raise ValueError(f"scene must have 1..{K_MAX_DEFAULT} agents, got {len(agents)}")
        horizons = {a.expert.horizon for a in agents}
        if len(horizons) != 1:
            raise StructuralError("all agents in a scene must share the horizon")
        dts = {a.environment.dt for a in agents}
        if len(dts) != 1:
            raise StructuralError("all agents in a scene must share dt")
        object.__setattr__(self, "agents", agents)

    @property
    def n_agents(self) -> int:
        return len(self.agents)


def scene_to_dict(scene: JointScene) -> dict:
    return {"agents": [demonstration_to_dict(a) for a in scene.agents]}


def scene_from_dict(d: dict) -> JointScene:
    return JointScene(tuple(demonstration_from_dict(a) for a in d["agents"]))


def save_scenes(path, scenes) -> None:
    with open(path, "w") as f:
        for scene in scenes:
            f.write(json.dumps(scene_to_dict(scene)) + "\n")


def load_scenes(path):
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(scene_from_dict(json.loads(line)))
    return out


def _coupled_problem(base: P.Problem, all_states, k: int) -> P.Problem:
    """Agent k's problem with the other agents' current positions appended
    to its static obstacle set."""
    others = [all_states[j][:, :2] for j in range(len(all_states)) if j != k]
    if not others:
        return base
    extra = np.stack(others, axis=0)
    obstacles = np.concatenate([base.obstacles, extra], axis=0) if base.obstacles.size else extra
    return base.with_obstacles(obstacles)


def joint_cost(model: C.CostModel, states_list, controls_list, base_probs) -> float:
    """Sum of per-agent costs on the fully coupled scene."""
    if len(base_probs) == 0:
        raise ValueError("joint cost needs at least one agent")
    total = 0.0
    for k, base in enumerate(base_probs):
        prob_k = _coupled_problem(base, states_list, k)
        total += C.cost_value(model, states_list[k], controls_list[k], prob_k)
    return total


def joint_energy_and_grad(model: C.CostModel, controls_list, base_probs):
    """Joint energy plus per-agent dC/du through the coupled rollout.

    Gradients include the cross terms: agent j's controls move agent j's
    trajectory, which enters every other agent's obstacle feature.
    """
    Kn = len(base_probs)
    states_list = [unroll_array(base_probs[k].x0, controls_list[k], base_probs[k].variant)
                   for k in range(Kn)]
    value = 0.0
    dx_list = []
    du_list = []
    cross = [np.zeros((base_probs[k].horizon, 4)) for k in range(Kn)]
    for k, base in enumerate(base_probs):
        prob_k = _coupled_problem(base, states_list, k)
        v_k, gphi_k, dx_k, du_k = C.feature_stage_backward(
            model, states_list[k], controls_list[k], prob_k)
        value += v_k
        dx_list.append(dx_k)
        du_list.append(du_k)
        if Kn > 1:
            dobs = K.obstacle_position_grads(states_list[k], prob_k.obstacles,
                                             prob_k.obstacle_cap, prob_k.obstacle_temp)
            n_static = base.obstacles.shape[0]
            others = [j for j in range(Kn) if j != k]
            for slot, j in enumerate(others):
                contrib = gphi_k[:, 9:10] * dobs[:, n_static + slot, :]
                cross[j][:, 0:2] += contrib
    grads = []
    for k, base in enumerate(base_probs):
        dx_total = dx_list[k] if Kn == 1 else dx_list[k] + cross[k]
        grads.append(C.adjoint_control_grad(states_list[k], controls_list[k], base,
                                            dx_total, du_list[k]))
    return value, grads, states_list


class JointObjective:
    """Joint energy in chain coordinates z (K, T, 2)."""

    def __init__(self, model: C.CostModel, base_probs):
        self.model = model
        self.base_probs = list(base_probs)
        self.codecs = [ControlCodec.for_model(model, p) for p in self.base_probs]

    def decode(self, z):
        us, masks = [], []
        for k, codec in enumerate(self.codecs):
            u, mask = codec.z_to_raw_with_mask(z[k])
            us.append(u)
            masks.append(mask)
        return us, masks

    def value_and_grad(self, z):
        us, masks = self.decode(z)
        value, grads, _ = joint_energy_and_grad(self.model, us, self.base_probs)
        gz = np.zeros_like(z)
        for k, codec in enumerate(self.codecs):
            gz[k] = codec.grad_to_z(grads[k], masks[k])
        return value, gz

    def value(self, z):
        us, _ = self.decode(z)
        states = [unroll_array(p.x0, u, p.variant) for p, u in zip(self.base_probs, us)]
        return joint_cost(self.model, states, us, self.base_probs)


def joint_solve(model: C.CostModel, base_probs, cfg: SamplerConfig,
                rng: np.random.Generator | None = None, init=None):
    """Joint Langevin/GD over all agents. Returns per-agent SolverResults
    (sharing the joint energy trace)."""
    t0 = time.perf_counter()
    Kn = len(base_probs)
    T = base_probs[0].horizon
    obj = JointObjective(model, base_probs)
    z0 = np.zeros((Kn, T, 2))
    if init is not None:
        for k in range(Kn):
            z0[k] = obj.codecs[k].raw_to_z(np.asarray(init[k], dtype=np.float64))
    if cfg.kind == "langevin":
        if rng is None:
            raise ValueError("joint langevin needs an rng")
        chain = langevin_chain(obj.value_and_grad, z0, cfg, rng)
    elif cfg.kind == "gd":
        chain = gd_chain(obj.value_and_grad, z0, cfg, value_fn=obj.value)
    else:
        raise ValueError(f"joint solving supports langevin/gd, not {cfg.kind!r}")
    wall = time.perf_counter() - t0
    results = []
    for k in range(Kn):
        u = obj.codecs[k].z_to_raw(chain.z[k])
        states = unroll_array(base_probs[k].x0, u, base_probs[k].variant)
        seq = ControlSequence(u)
        trace_k = None
        if chain.z_trace is not None:
            trace_k = np.stack([obj.codecs[k].z_to_raw(zs[k]) for zs in chain.z_trace])
        results.append(SolverResult(
            controls=seq,
            trajectory=Trajectory(states=states, controls=seq),
            energy_trace=chain.energies,
            accepted_steps=chain.accepted,
            wall_time=wall,
            control_trace=trace_k,
        ))
    return results


# ---------------------------------------------------------------------------
# Training


def scene_to_items(scene: JointScene, cfg: L.TrainConfig, variant=None, bounds=None):
    return [L.demo_to_item(agent, cfg, variant=variant, bounds=bounds)
            for agent in scene.agents]


def joint_synthesizer(scene_items, model, generator, cfg: L.TrainConfig, epoch: int, index: int):
    """Synthesis hook for the shared engine: one coupled chain per scene."""
    base_probs = [item.prob for item in scene_items]
    rng = substream(cfg.seed, "chain", epoch, index, 0)
    results = joint_solve(model, base_probs, cfg.sampler, rng)
    phis = []
    energies = []
    refined = []
    for k, (item, res) in enumerate(zip(scene_items, results)):
        states_all = [r.trajectory.states for r in results]
        prob_k = _coupled_problem(item.prob, states_all, k)
        from . import features as F

        phi = F.frame_feature_matrix(res.trajectory.states, res.controls.values, prob_k)
        phis.append([phi])
        energies.append(float(res.energy_trace[-1]))
        refined.append(res.controls.values)
    return L.SceneSynthesis(agent_phis=phis, agent_energies=energies,
                            refined_controls=refined, xi=None)


def _expert_coupled_items(scene: JointScene, cfg: L.TrainConfig, variant=None, bounds=None):
    """Items whose expert features see the other experts as obstacles."""
    items = scene_to_items(scene, cfg, variant=variant, bounds=bounds)
    expert_states = [np.asarray(a.expert.states) for a in scene.agents]
    from . import features as F

    for k, item in enumerate(items):
        prob_k = _coupled_problem(item.prob, expert_states, k)
        item.expert_phi = F.frame_feature_matrix(item.expert_states, item.expert_controls,
                                                 prob_k)
    return items


def train_multiagent(scenes, model_kind: str, cfg: L.TrainConfig, variant=None,
                     bounds=None, eval_fn=None, model_kwargs=None):
    """Algorithm-1 style training over joint scenes with a shared cost.

    The likelihood gradient averages per-agent feature differences over
    all agents in the batch; at K = 1 the trace is bit-identical to
    single-agent training with the same seed.
    """
    from . import features as F

    if cfg.sampler.kind == "ilqr":
        raise C.UnsupportedModelError("joint multi-agent synthesis supports langevin/gd only")
    scene_items = [_expert_coupled_items(s, cfg, variant=variant, bounds=bounds) for s in scenes]

    all_phis = [it.expert_phi for items in scene_items for it in items]
    all_controls = [it.expert_controls for items in scene_items for it in items]
    normalizer = F.fit_normalizer_from_matrices(all_phis, all_controls)

    rng_init = substream(cfg.seed, "theta-init")
    model = C.create_model(model_kind, rng=rng_init, normalizer=normalizer,
                           **(model_kwargs or {}))
    model, _, trace = L.run_training(scene_items, model, cfg,
                                     synthesize_fn=joint_synthesizer, eval_fn=eval_fn)
    return model, trace
