#pragma once

#include "cresp/core.hpp"
#include "cresp/bmdp.hpp"
#include "cresp/rsd_oracle.hpp"
#include "cresp/charfn.hpp"
#include "cresp/diffnet.hpp"
#include "cresp/training.hpp"
#include "cresp/evaluation.hpp"
#include "cresp/verify.hpp"
