#ifndef RULEGRAPH_TESTS_PIPELINE_FIXTURE_H_
#define RULEGRAPH_TESTS_PIPELINE_FIXTURE_H_

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "rulegraph/pipeline.h"
#include "rulegraph/synthetic.h"

namespace rulegraph::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rulegraph_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Writes a synthetic fixture into `dir` and returns its pipeline config.
inline PipelineConfig synthetic_fixture(const std::string& dir, std::uint64_t seed, int train_sentences,
                                        int test_sentences = 200) {
  SynthConfig sc;
  sc.train_sentences = train_sentences;
  sc.dev_sentences = 100;
  sc.test_sentences = test_sentences;
  write_synthetic(generate_synthetic(sc, seed), dir, seed);
  return load_pipeline_config(dir + "/config.json");
}

}  // namespace rulegraph::testing

#endif  // RULEGRAPH_TESTS_PIPELINE_FIXTURE_H_
