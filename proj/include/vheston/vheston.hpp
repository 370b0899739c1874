#pragma once

// Everything at once. Individual headers can be included on their own.

#include "vheston/errors.hpp"
#include "vheston/kernels.hpp"
#include "vheston/model.hpp"
#include "vheston/riccati.hpp"
#include "vheston/curves.hpp"
#include "vheston/random.hpp"
#include "vheston/simulate.hpp"
#include "vheston/skew.hpp"
#include "vheston/config.hpp"
#include "vheston/cli.hpp"
