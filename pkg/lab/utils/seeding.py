import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class RunStreams:
    """
    Independent generators for one run. Data and distribution-matching draws
    never share a stream, so switching the matching term on or off leaves the
    consistency batches untouched.
    """
    init: np.random.Generator
    data: np.random.Generator
    dmd: np.random.Generator
    fake: np.random.Generator


def spawn_streams(seed: int) -> RunStreams:
    init, data, dmd, fake = np.random.SeedSequence(seed).spawn(4)
    return RunStreams(
        init=np.random.default_rng(init),
        data=np.random.default_rng(data),
        dmd=np.random.default_rng(dmd),
        fake=np.random.default_rng(fake),
    )


def resolve_seed(cli_seed: Optional[int], env_seed: Optional[int], config_seed: int) -> int:
    """CLI flag, then FSF_SEED, then the config file."""
    if cli_seed is not None:
        return cli_seed
    if env_seed is not None:
        logger.info(f"Using seed {env_seed} from FSF_SEED")
        return env_seed
    return config_seed
