#ifndef SAFESWITCH_SAFESWITCH_HPP
#define SAFESWITCH_SAFESWITCH_HPP

#include "safeswitch/certify.hpp"
#include "safeswitch/errors.hpp"
#include "safeswitch/experiments.hpp"
#include "safeswitch/matops.hpp"
#include "safeswitch/model.hpp"
#include "safeswitch/model_io.hpp"
#include "safeswitch/simulate.hpp"
#include "safeswitch/supervisor.hpp"

#endif  // SAFESWITCH_SAFESWITCH_HPP
