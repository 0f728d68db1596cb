#pragma once

#define UAVMM_VERSION_MAJOR 0
#define UAVMM_VERSION_MINOR 1
#define UAVMM_VERSION_PATCH 0
#define UAVMM_VERSION_STRING "0.1.0"
