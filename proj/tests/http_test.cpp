#include <gtest/gtest.h>

#include <thread>

#include "emma/http_server.hpp"
#include "service_fixture.hpp"

using namespace emma;

namespace {

class Http : public ::testing::Test {
protected:
    void SetUp() override {
        service = std::make_unique<Service>(ServiceConfig{}, default_catalog(), default_templates(), nullptr,
                                            clock.clock());
        mount(server, *service);
        port = server.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port, 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
    }

    void TearDown() override {
        server.stop();
        if (thread.joinable()) thread.join();
    }

    std::pair<int, Json> post(const char* path, const std::string& body) {
        const auto res = client->Post(path, body, "application/json");
        if (!res) return {0, {}};
        return {res->status, Json::parse(res->body)};
    }

    std::pair<int, Json> get(const std::string& path) {
        const auto res = client->Get(path);
        if (!res) return {0, {}};
        return {res->status, Json::parse(res->body)};
    }

    testutil::ManualClock clock;
    std::unique_ptr<Service> service;
    httplib::Server server;
    int port = 0;
    std::thread thread;
    std::unique_ptr<httplib::Client> client;
};

} // namespace

TEST_F(Http, EndToEndCalibrationFlow) {
    auto [status, body] = post("/users", testutil::profile_json("a", "control").dump());
    EXPECT_EQ(status, 201);
    EXPECT_EQ(body["condition"], "control");

    std::tie(status, body) = post("/location", Json{{"user_id", "a"},
                                                    {"pings", {{{"at", "2024-03-05T07:59:00Z"}, {"lat", 47.6}, {"lon", -122.3}}}}}
                                                   .dump());
    EXPECT_EQ(status, 200);
    EXPECT_EQ(body["accepted"], 1);

    std::tie(status, body) = post("/selfreport", R"({"user_id":"a","valence":0.1,"arousal":0.2})");
    ASSERT_EQ(status, 200);
    EXPECT_EQ(body["interaction"]["message"]["text"], "Okay. Let's try an intervention then.");
    const std::string prompt = body["interaction"]["prompt_id"];

    std::tie(status, body) = post("/respond", Json{{"user_id", "a"}, {"prompt_id", prompt}, {"action", "skip"}}.dump());
    EXPECT_EQ(status, 200);
    EXPECT_TRUE(body["message"]["text"].is_string());

    clock.set("2024-03-05T20:59:00Z");
    std::tie(status, body) = get("/prompt?user_id=a");
    EXPECT_EQ(status, 200);
    EXPECT_EQ(body["kind"], "sampling_prompt");

    Json items;
    for (const auto name : kLikertItems) items[std::string(name)] = 5;
    std::tie(status, body) = post("/survey", Json{{"user_id", "a"}, {"week", 1}, {"items", items}}.dump());
    EXPECT_EQ(status, 200);

    std::tie(status, body) = post("/optin", R"({"user_id":"a"})");
    EXPECT_EQ(status, 200);
    std::tie(status, body) = get("/session?user_id=a");
    EXPECT_EQ(status, 200);
    EXPECT_EQ(body["recent_interventions"].size(), 1u);

    const auto res = client->Get("/metrics");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const Json metrics = Json::parse(res->body);
    EXPECT_EQ(metrics, service->metrics().body);
    EXPECT_EQ(res->body, service->metrics().body.dump(2) + "\n");
}

TEST_F(Http, ErrorShapes) {
    auto [status, body] = post("/users", "{not json");
    EXPECT_EQ(status, 400);
    EXPECT_EQ(body["code"], "parse_error");
    std::tie(status, body) = post("/users", "[1,2]");
    EXPECT_EQ(status, 400);
    EXPECT_EQ(body["code"], "validation_error");
    std::tie(status, body) = post("/selfreport", R"({"user_id":"ghost","valence":0.1,"arousal":0.2})");
    EXPECT_EQ(status, 404);
    EXPECT_EQ(body["code"], "not_found");
    std::tie(status, body) = get("/prompt");
    EXPECT_EQ(status, 400);
    EXPECT_EQ(body["field_path"], "user_id");
    post("/users", testutil::profile_json("a").dump());
    std::tie(status, body) = post("/users", testutil::profile_json("a").dump());
    EXPECT_EQ(status, 409);
    std::tie(status, body) = post("/selfreport", R"({"user_id":"a","valence":"high","arousal":0.2})");
    EXPECT_EQ(status, 400);
    EXPECT_EQ(body["field_path"], "selfreport.valence");
    EXPECT_TRUE(body["message"].is_string());
}
