#pragma once

// Everything: scene, sensors, mapping, agent, reward, env, runner, bridge.

#include "srli/bridge.hpp"
