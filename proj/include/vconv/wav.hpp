/*
 * Copyright 2026 The vconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <vector>

namespace vconv {

// Mono PCM audio in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

// RIFF/WAVE, PCM 16-bit little-endian, mono. Anything else is rejected with
// an error naming the offending property; no resampling happens here.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace vconv
