#pragma once

#include "lobit/calib.hpp"
#include "lobit/distill.hpp"
#include "lobit/errors.hpp"
#include "lobit/intq.hpp"
#include "lobit/matrix.hpp"
#include "lobit/matvec.hpp"
#include "lobit/metrics.hpp"
#include "lobit/rng.hpp"
#include "lobit/seq.hpp"
#include "lobit/sherry.hpp"
#include "lobit/store.hpp"
#include "lobit/toylm.hpp"
