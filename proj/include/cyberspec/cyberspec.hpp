#pragma once

#include "cyberspec/attacks.hpp"
#include "cyberspec/catalog.hpp"
#include "cyberspec/collector.hpp"
#include "cyberspec/config.hpp"
#include "cyberspec/curation.hpp"
#include "cyberspec/detectors/model.hpp"
#include "cyberspec/evaluation.hpp"
#include "cyberspec/fingerprint.hpp"
#include "cyberspec/io.hpp"
#include "cyberspec/spectrum.hpp"
