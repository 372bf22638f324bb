#pragma once

/// Umbrella header for the tampo library.

#include "tampo/config.hpp"
#include "tampo/envs.hpp"
#include "tampo/format.hpp"
#include "tampo/grpo.hpp"
#include "tampo/metrics_io.hpp"
#include "tampo/policy.hpp"
#include "tampo/rng.hpp"
#include "tampo/tampo_version.hpp"
#include "tampo/tempmeta.hpp"
#include "tampo/trainer.hpp"
