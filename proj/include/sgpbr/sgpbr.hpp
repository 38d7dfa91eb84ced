#pragma once

// Everything: SG lighting, BRDF, SDF geometry, surface sampling, material
// fields with reverse-mode gradients, rendering, fitting and file I/O.

#include "sgpbr/autodiff.hpp"
#include "sgpbr/brdf.hpp"
#include "sgpbr/camera.hpp"
#include "sgpbr/checkpoint.hpp"
#include "sgpbr/commands.hpp"
#include "sgpbr/envmap.hpp"
#include "sgpbr/fields.hpp"
#include "sgpbr/image.hpp"
#include "sgpbr/inverse.hpp"
#include "sgpbr/marching_cubes.hpp"
#include "sgpbr/math.hpp"
#include "sgpbr/metrics.hpp"
#include "sgpbr/mlp.hpp"
#include "sgpbr/parallel.hpp"
#include "sgpbr/renderer.hpp"
#include "sgpbr/rng.hpp"
#include "sgpbr/scene_io.hpp"
#include "sgpbr/sdf.hpp"
#include "sgpbr/sg.hpp"
#include "sgpbr/surface_sampling.hpp"
