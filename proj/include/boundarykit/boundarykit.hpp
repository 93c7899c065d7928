#pragma once

#include "boundarykit/artifact_store.hpp"
#include "boundarykit/audit.hpp"
#include "boundarykit/clock.hpp"
#include "boundarykit/config.hpp"
#include "boundarykit/digest.hpp"
#include "boundarykit/engine.hpp"
#include "boundarykit/errors.hpp"
#include "boundarykit/fixtures.hpp"
#include "boundarykit/governance.hpp"
#include "boundarykit/handoff.hpp"
#include "boundarykit/incident.hpp"
#include "boundarykit/payload.hpp"
#include "boundarykit/reliability.hpp"
#include "boundarykit/scenarios.hpp"
#include "boundarykit/stubs.hpp"
#include "boundarykit/validation.hpp"
