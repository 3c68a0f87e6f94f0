#pragma once

// Everything except the CLI front end.

#include "corpusforge/acquisition.hpp"
#include "corpusforge/archive.hpp"
#include "corpusforge/chunker.hpp"
#include "corpusforge/dataset.hpp"
#include "corpusforge/delimiters.hpp"
#include "corpusforge/digest.hpp"
#include "corpusforge/document.hpp"
#include "corpusforge/errors.hpp"
#include "corpusforge/http.hpp"
#include "corpusforge/jsonl.hpp"
#include "corpusforge/latex.hpp"
#include "corpusforge/mmd.hpp"
#include "corpusforge/pipeline.hpp"
#include "corpusforge/qagen.hpp"
#include "corpusforge/tables.hpp"
#include "corpusforge/text.hpp"
#include "corpusforge/train_manifest.hpp"
