"""
Environment construction from experiment config entries.
"""

import logging

from app.models.mdp import LinearMdpSpec
from app.models.schemas import FromFileEnv, HardInstanceEnv, LinearRandomEnv, TabularRandomEnv
from app.services.hard_instance import build_hard_instance
from app.services.mdp import embed_tabular, random_linear, random_tabular
from app.services.serialization import read_spec

logger = logging.getLogger(__name__)


def instance_seed(env, seed: int) -> int:
    """A fixed instance_seed shares one instance across replicates"""
    fixed = getattr(env, "instance_seed", None)
    return seed if fixed is None else fixed


def build_environment(env, seed: int) -> LinearMdpSpec:
    """
    Build the LinearMdpSpec for one run.

    Args:
        env: One member of the environment union
        seed: Run seed (used for the instance unless instance_seed is set)
    """
    if isinstance(env, TabularRandomEnv):
        tabular = random_tabular(env.S, env.A, env.H, env.sparsity, instance_seed(env, seed))
        return embed_tabular(tabular)
    if isinstance(env, LinearRandomEnv):
        return random_linear(
            env.d, env.H, env.n_states, instance_seed(env, seed),
            n_actions=env.n_actions, feature_mode=env.feature_mode,
        )
    if isinstance(env, HardInstanceEnv):
        return build_hard_instance(env.params(instance_seed(env, seed)))
    if isinstance(env, FromFileEnv):
        logger.debug(f"Loading spec from {env.path}")
        return read_spec(env.path)
    raise TypeError(f"unsupported environment {type(env).__name__}")
