#pragma once

#include "pbn/archive.hpp"
#include "pbn/builders.hpp"
#include "pbn/dataset.hpp"
#include "pbn/error.hpp"
#include "pbn/features.hpp"
#include "pbn/gradient.hpp"
#include "pbn/linops.hpp"
#include "pbn/model_io.hpp"
#include "pbn/network.hpp"
#include "pbn/parallel.hpp"
#include "pbn/pgm.hpp"
#include "pbn/reconstruct.hpp"
#include "pbn/saddlepoint.hpp"
#include "pbn/run_config.hpp"
#include "pbn/scalar_priors.hpp"
#include "pbn/scores.hpp"
#include "pbn/toy.hpp"
#include "pbn/training.hpp"
