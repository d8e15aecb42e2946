#pragma once

#include "rwg/errors.hpp"
#include "rwg/group.hpp"
#include "rwg/measure.hpp"
#include "rwg/lattice_fast.hpp"
#include "rwg/parallel.hpp"
#include "rwg/rng.hpp"
#include "rwg/walk.hpp"
#include "rwg/chung_fuchs.hpp"
#include "rwg/heat_kernel.hpp"
#include "rwg/family.hpp"
#include "rwg/audit.hpp"
#include "rwg/entropy_lab.hpp"
#include "rwg/coarse.hpp"
#include "rwg/config.hpp"
#include "rwg/experiment.hpp"
