// Copyright 2026 The sibtree Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <sibtree/prompts.hpp>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sibtree::testing {

TempDir::TempDir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "sibtree-test-XXXXXX").string();
  if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::vector<Problem> synthetic_problems(int n, const std::string& prefix) {
  std::vector<Problem> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({fmt::format("{}{:02d}", prefix, i), fmt::format("What is {} + {}?", i, i), std::to_string(2 * i),
                   "synthetic"});
  }
  return out;
}

std::string problems_jsonl(const std::vector<Problem>& problems) {
  std::string out;
  for (const auto& p : problems) {
    out += nlohmann::json{{"id", p.id}, {"question", p.question}, {"answer", p.reference_answer}, {"source", p.source}}
               .dump();
    out += '\n';
  }
  return out;
}

MockRig make_mock(MockScript script, const std::string& model_name) {
  MockRig rig;
  CallLog::Options options;
  options.keep_prompts = true;
  rig.log = std::make_shared<CallLog>(options);
  rig.generator = std::make_shared<MockGenerator>(std::move(script), model_name);
  rig.backend = std::make_unique<ModelBackend>(rig.generator, PromptTemplates::builtin(), rig.log);
  return rig;
}

MockScript one_correct_branch_script() {
  MockScript script;
  script.seed = 11;
  MockRule first;
  first.capability = Capability::step;
  first.depth = 1;
  first.outputs = {"Try method {stream}."};
  script.rules.push_back(first);

  MockRule good;
  good.capability = Capability::step;
  good.prefix_first = "Try method 1.";
  good.outputs = {"So the answer is {answer}."};
  script.rules.push_back(good);

  MockRule bad;
  bad.capability = Capability::step;
  bad.outputs = {"So the answer is 7."};
  script.rules.push_back(bad);
  return script;
}

namespace {

void grow(ReasoningTree& tree, NodeId node, std::mt19937_64& rng, int max_depth, int max_branching, int& counter) {
  std::uniform_int_distribution<int> branches(1, max_branching);
  std::uniform_int_distribution<int> visits(0, 6);
  std::uniform_int_distribution<int> grid(0, 8);
  std::bernoulli_distribution expand(0.6);
  std::bernoulli_distribution terminal(0.5);
  const int depth = tree.node(node).depth;
  const int n = branches(rng);
  for (int i = 0; i < n; ++i) {
    const bool grows = depth + 1 < max_depth && expand(rng);
    const bool is_terminal = !grows && terminal(rng);
    const int id = ++counter;
    std::string text = fmt::format("Step {}: move {} on branch {:04x}", depth + 1, id, static_cast<unsigned>(rng() & 0xffff));
    std::optional<std::string> answer;
    if (is_terminal) {
      answer = std::to_string(id % 5);
      text += fmt::format(", so the answer is {}.", *answer);
    }
    const NodeId child = tree.add_child(node, text, -0.1 * static_cast<double>(i + 1), is_terminal, answer);
    const int nv = visits(rng);
    tree.set_statistics(child, nv == 0 ? 0.0 : grid(rng) / 8.0, nv);
    if (grows) grow(tree, child, rng, max_depth, max_branching, counter);
  }
}

}  // namespace

ReasoningTree random_tree(std::mt19937_64& rng, int max_depth, int max_branching) {
  Problem problem{"rand", "Random question?", "0", "generated"};
  SearchConfig config;
  config.d_max = std::max(max_depth, 1);
  ReasoningTree tree = new_tree(problem, config, rng());
  int counter = 0;
  grow(tree, tree.root(), rng, max_depth, max_branching, counter);
  tree.set_statistics(tree.root(), 0.5, 10);
  return tree;
}

FakeChatServer::FakeChatServer(Options options) : options_(std::move(options)), server_(new httplib::Server) {
  server_->Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
    const int now = in_flight_.fetch_add(1) + 1;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    const int index = requests_.fetch_add(1);
    {
      std::lock_guard lock(mutex_);
      starts_.push_back(std::chrono::steady_clock::now());
      last_body_ = req.body;
      last_authorization_ = req.get_header_value("Authorization");
    }
    if (options_.latency_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options_.latency_ms));

    const int status = static_cast<std::size_t>(index) < options_.statuses.size()
                           ? options_.statuses[static_cast<std::size_t>(index)]
                           : options_.fallback_status;
    res.status = status;
    if (status == 200) {
      const auto request = nlohmann::json::parse(req.body);
      const int n = request.value("n", 1);
      nlohmann::json choices = nlohmann::json::array();
      for (int i = 0; i < n; ++i) {
        nlohmann::json choice{{"index", i}, {"message", {{"role", "assistant"}, {"content", fmt::format("fake {}", i)}}}};
        if (options_.include_logprobs) {
          choice["logprobs"] = {{"content",
                                 {{{"token", "fake"}, {"logprob", -0.1 * (i + 1)}},
                                  {{"token", " x"}, {"logprob", -0.3 * (i + 1)}}}}};
        }
        choices.push_back(std::move(choice));
      }
      res.set_content(nlohmann::json{{"choices", choices}, {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 2 * n}}}}
                          .dump(),
                      "application/json");
    } else {
      res.set_content(R"({"error":{"message":"scripted"}})", "application/json");
    }
    in_flight_.fetch_sub(1);
  });
  port_ = server_->bind_to_any_port("127.0.0.1");
  if (port_ <= 0) throw std::runtime_error("fake server could not bind");
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

FakeChatServer::~FakeChatServer() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string FakeChatServer::base_url() const { return fmt::format("http://127.0.0.1:{}/v1", port_); }

std::vector<std::chrono::steady_clock::time_point> FakeChatServer::request_starts() const {
  std::lock_guard lock(mutex_);
  return starts_;
}

std::string FakeChatServer::last_body() const {
  std::lock_guard lock(mutex_);
  return last_body_;
}

std::string FakeChatServer::last_authorization() const {
  std::lock_guard lock(mutex_);
  return last_authorization_;
}

}  // namespace sibtree::testing
