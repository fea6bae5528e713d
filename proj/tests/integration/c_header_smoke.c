// Copyright 2026 The Desc2Story Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <stdio.h>
#include <string.h>

#include "d2s/d2s.h"

int main(void) {
  d2s_train_config cfg;
  d2s_lm_options opt;
  d2s_train_config_init(&cfg);
  d2s_lm_options_init(&opt);
  if (strcmp(d2s_version(), "1.0.0") != 0) return 1;
  if (d2s_model_load(NULL, NULL) != D2S_ERR_INVALID_ARGUMENT) return 1;
  if (d2s_last_error()[0] == '\0') return 1;
  if (cfg.threads != 1 || opt.order == 0) return 1;
  puts("ok");
  return 0;
}
