#pragma once

#include "cablewatch/frame.hpp"
#include "cablewatch/image_io.hpp"
#include "cablewatch/ingest.hpp"
#include "cablewatch/roi.hpp"
#include "cablewatch/preprocess.hpp"
#include "cablewatch/change_detect.hpp"
#include "cablewatch/alt_detect.hpp"
#include "cablewatch/config.hpp"
#include "cablewatch/calibrate.hpp"
#include "cablewatch/pipeline.hpp"
#include "cablewatch/synth.hpp"
#include "cablewatch/render.hpp"
#include "cablewatch/metrics.hpp"
