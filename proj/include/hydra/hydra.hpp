#pragma once

#include "hydra/error.hpp"
#include "hydra/linalg.hpp"
#include "hydra/rng.hpp"
#include "hydra/models.hpp"
#include "hydra/trainer.hpp"
#include "hydra/hypergrad.hpp"
#include "hydra/influence.hpp"
#include "hydra/attribution.hpp"
#include "hydra/oracle.hpp"
#include "hydra/data.hpp"
#include "hydra/io.hpp"
#include "hydra/experiment.hpp"
