// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the vcavity project.

#pragma once

#include "vcavity/errors.hpp"
#include "vcavity/spectra.hpp"
#include "vcavity/geometry.hpp"
#include "vcavity/forward.hpp"
#include "vcavity/inverse.hpp"
#include "vcavity/metrics.hpp"
#include "vcavity/io.hpp"
#include "vcavity/config.hpp"
#include "vcavity/experiments.hpp"
