#pragma once

#include "curekit/backend.hpp"
#include "curekit/binary_io.hpp"
#include "curekit/cycle.hpp"
#include "curekit/datagen.hpp"
#include "curekit/demo.hpp"
#include "curekit/error.hpp"
#include "curekit/fe.hpp"
#include "curekit/inverse.hpp"
#include "curekit/material.hpp"
#include "curekit/nn.hpp"
#include "curekit/optimizer.hpp"
#include "curekit/parallel.hpp"
#include "curekit/random.hpp"
#include "curekit/surrogate.hpp"
#include "curekit/trace.hpp"
