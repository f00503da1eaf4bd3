"""Tour of the environment family: build a world, roll a random policy,
inspect rewards, costs and the observation layout, and dump a trace."""
import tempfile
from pathlib import Path

import numpy as np

from cmdpbench.bench.suite import parse_suite
from cmdpbench.env_suite import CmdpEnv, WorldConfig, observation_dim

# Suite names select robot, task and constraint; everything else is WorldConfig.
suite = parse_suite("Goal_Point_8Hazards")
print("suite:", suite)

for name in ("Goal_Point_8Hazards", "Push_Point_4Hazards", "Chase_Drone_8Ghosts",
             "Defense_Point_8Ghosts", "Goal_Drone_83DGhosts"):
    cfg = parse_suite(name).world_config()
    print(f"{name:24s} obs_dim={observation_dim(cfg):3d}")

cfg = WorldConfig(max_episode_steps=200)
env = CmdpEnv(cfg, seed=0, record_trace=True)
rng = np.random.default_rng(0)
obs = env.reset()
total_r, total_c = 0.0, 0.0
while True:
    out = env.step(rng.uniform(-1, 1, env.act_dim))
    total_r += out.reward
    total_c += out.cost
    if out.done:
        break
print(f"random policy, one episode: return {total_r:.3f}, cost {total_c:.0f}, "
      f"steps {len(env.trace)}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "trace.csv"
    env.write_trace(path)
    print("trace head:", path.read_text().splitlines()[:3])
