"""
Environment Registry
Central registry for environment builders, parameter records and case-study defaults
"""

from dataclasses import dataclass, fields
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ..envs.base import Environment, FiniteMdpEnvironment
from ..envs.boat import Boat, BoatParams, default_boat_regions
from ..envs.cartpole import CartPole, CartPoleParams, default_cartpole_regions
from ..envs.finite import FiniteParams, build_finite_mdp
from ..envs.labeling import Labeling, TableLabeling

AnyLabeling = Union[Labeling, TableLabeling]


@dataclass
class EnvInfo:
    """Environment metadata"""
    params_class: type
    build: Callable[[Any], Tuple[Environment, Optional[List[frozenset]]]]
    default_regions: Optional[Callable[[], dict]] = None
    # Built-in automata for the upper and lower bound modes
    automata: Tuple[Optional[str], Optional[str]] = (None, None)
    # Case-study formula over the default regions
    formula: Optional[str] = None


def _build_cartpole(p: CartPoleParams):
    return CartPole(p), None


def _build_boat(p: BoatParams):
    return Boat(p), None


def _build_finite(p: FiniteParams):
    mdp, table = build_finite_mdp(p)
    return FiniteMdpEnvironment(mdp, p.initial_states or None), table


ENV_REGISTRY: Dict[str, EnvInfo] = {
    "cartpole": EnvInfo(CartPoleParams, _build_cartpole, default_cartpole_regions, ("cartpole_pos", "cartpole_neg"), "<>a & [](c1 & c2)"),
    "boat": EnvInfo(BoatParams, _build_boat, default_boat_regions, ("boat_pos", "boat_neg"), "<>t"),
    "finite": EnvInfo(FiniteParams, _build_finite),
}


def get_env_info(name: str) -> EnvInfo:
    if name not in ENV_REGISTRY:
        raise ValueError(f"unknown environment '{name}', expected one of {sorted(ENV_REGISTRY)}")
    return ENV_REGISTRY[name]


def make_params(name: str, params: Optional[Mapping[str, Any]] = None):
    """Parameter record of an environment, rejecting unknown keys."""
    info = get_env_info(name)
    params = dict(params or {})
    known = {f.name for f in fields(info.params_class)}
    unknown = set(params) - known
    if unknown:
        raise ValueError(f"{name}: unknown parameters {sorted(unknown)}, expected a subset of {sorted(known)}")
    return info.params_class(**params)


def build_environment(name: str, params: Optional[Mapping[str, Any]] = None) -> Tuple[Environment, Optional[List[frozenset]]]:
    """Environment plus the default per-state proposition table of finite fixtures."""
    info = get_env_info(name)
    return info.build(make_params(name, params))


def build_labeling(
    name: str,
    env: Environment,
    regions: Optional[Mapping[str, Any]] = None,
    table: Optional[Iterable[Iterable[str]]] = None,
    ap: Optional[Iterable[str]] = None,
    default_table: Optional[List[frozenset]] = None,
) -> AnyLabeling:
    """
    Box labelling for continuous environments (configured regions, else the
    case-study defaults) or a table labelling for finite ones.
    """
    info = get_env_info(name)
    if isinstance(env, FiniteMdpEnvironment):
        rows = list(table) if table else default_table
        if rows is None:
            rows = [[] for _ in range(env.mdp.n_states)]
        if len(rows) != env.mdp.n_states:
            raise ValueError(f"finite: labelling table has {len(rows)} rows for {env.mdp.n_states} states")
        return TableLabeling(rows, ap or None)
    spec = regions if regions else (info.default_regions() if info.default_regions else {})
    return Labeling.from_config(env.dims, spec, ap or None)
