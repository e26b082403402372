// Test double for the external rescorer protocol.
//   fake_scorer uniform V   every token has probability 1/V
//   fake_scorer silent      reads requests, never answers
//   fake_scorer wrong-id    answers with a mismatched id
//   fake_scorer exit        exits immediately
#include <cmath>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "uniform";
  if (mode == "exit") return 0;
  const double v = argc > 2 ? std::stod(argv[2]) : 10.0;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (mode == "silent") {
      std::this_thread::sleep_for(std::chrono::seconds(30));
      return 0;
    }
    const auto req = nlohmann::json::parse(line);
    std::istringstream words(req.at("text").get<std::string>());
    long n = 0;
    for (std::string w; words >> w;) ++n;
    nlohmann::json resp{{"id", req.at("id").get<long>() + (mode == "wrong-id" ? 1 : 0)},
                        {"logprob_sum", -static_cast<double>(n) * std::log(v)},
                        {"token_count", n}};
    std::cout << resp.dump() << std::endl;
  }
}
