#pragma once

#include "trackvote/association.hpp"
#include "trackvote/consensus.hpp"
#include "trackvote/dataset.hpp"
#include "trackvote/error.hpp"
#include "trackvote/eval.hpp"
#include "trackvote/field.hpp"
#include "trackvote/keyframe.hpp"
#include "trackvote/mask.hpp"
#include "trackvote/pipeline.hpp"
#include "trackvote/random.hpp"
#include "trackvote/synth.hpp"
#include "trackvote/train.hpp"
