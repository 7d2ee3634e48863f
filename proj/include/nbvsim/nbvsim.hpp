// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header for the nbvsim header-only library.

#ifndef NBVSIM_NBVSIM_HPP
#define NBVSIM_NBVSIM_HPP

#include "nbvsim/benchmark.hpp"
#include "nbvsim/camera.hpp"
#include "nbvsim/episode.hpp"
#include "nbvsim/geom.hpp"
#include "nbvsim/grid.hpp"
#include "nbvsim/motion.hpp"
#include "nbvsim/mpc.hpp"
#include "nbvsim/nn.hpp"
#include "nbvsim/registration.hpp"
#include "nbvsim/scene.hpp"
#include "nbvsim/score.hpp"
#include "nbvsim/serialize.hpp"
#include "nbvsim/vpformer.hpp"

#endif
