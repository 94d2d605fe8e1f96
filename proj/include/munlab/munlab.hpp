#pragma once

#include "munlab/agent.hpp"
#include "munlab/distance.hpp"
#include "munlab/dynamics.hpp"
#include "munlab/envs.hpp"
#include "munlab/errors.hpp"
#include "munlab/numerics/adam.hpp"
#include "munlab/numerics/gradcheck.hpp"
#include "munlab/numerics/matrix.hpp"
#include "munlab/numerics/mlp.hpp"
#include "munlab/orchestrator/config.hpp"
#include "munlab/orchestrator/episodes.hpp"
#include "munlab/orchestrator/evaluation.hpp"
#include "munlab/orchestrator/metrics.hpp"
#include "munlab/orchestrator/serialize.hpp"
#include "munlab/orchestrator/trainer.hpp"
#include "munlab/replay.hpp"
#include "munlab/rng.hpp"
#include "munlab/subgoals.hpp"
