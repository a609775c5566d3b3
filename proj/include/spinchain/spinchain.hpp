#pragma once

#include "spinchain/analysis.hpp"
#include "spinchain/evolve.hpp"
#include "spinchain/experiment.hpp"
#include "spinchain/hilbert.hpp"
#include "spinchain/model.hpp"
#include "spinchain/protocol.hpp"
#include "spinchain/version.hpp"
