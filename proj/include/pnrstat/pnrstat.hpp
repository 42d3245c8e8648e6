// Copyright 2026 The pnrstat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "commands.hpp"
#include "detector_channel.hpp"
#include "distributions.hpp"
#include "errors.hpp"
#include "inference.hpp"
#include "io.hpp"
#include "measures.hpp"
#include "monte_carlo.hpp"
#include "optimizer.hpp"
#include "views.hpp"
