"""Joint edge/cloud partitioning and channel-pruning planner.

The planner treats deployment as a two-level decision: pick the layer
boundary where inference hands off from edge to cloud, then pick how hard to
prune each convolutional layer.  A value network scores the boundaries and
one actor per boundary emits rates sequentially; plans are judged by inverse
end-to-end latency subject to an accuracy floor.
"""

from .agent import PlannerAgent, TrainConfig, load_agent, save_agent
from .brute import Grid, enumerate_best
from .errors import (ConfigError, DomainError, NotFoundError, ParseError,
                     RefusedError, SplitpruneError)
from .graphs import (DEFAULT_R_MAX, LayerDesc, LayerGraph, Plan, apply_prune,
                     layer_flops, load_arch, output_bytes, parse_arch, preset,
                     preset_names, total_flops)
from .perf import Environment, LatencyBreakdown, latency, reward
from .mdp import Episode, EnvState, PruneEnv, read_episodes, write_episodes
from .oracles import (AccuracyOracle, SurrogateOracle, SurrogateParams,
                      TableOracle, default_surrogate, sensitivity_from_flops)

__version__ = "0.1.0"
