#pragma once

#include "macsim/autodiff.hpp"
#include "macsim/baselines.hpp"
#include "macsim/config.hpp"
#include "macsim/env.hpp"
#include "macsim/error.hpp"
#include "macsim/instances.hpp"
#include "macsim/losses.hpp"
#include "macsim/oracle.hpp"
#include "macsim/policy.hpp"
#include "macsim/rng.hpp"
#include "macsim/rollout.hpp"
#include "macsim/sampler.hpp"
#include "macsim/trainer.hpp"
#include "macsim/verify.hpp"
