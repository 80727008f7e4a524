#pragma once

// HTTP/1.1 binding of the service endpoints. Bodies are UTF-8 JSON; errors
// carry {code, message, field_path?}.

#include <string>

#include <httplib.h>

#include "emma/service.hpp"

namespace emma {

inline void send(httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
}

inline Reply parse_body(const httplib::Request& req, Json& out) {
    try {
        out = Json::parse(req.body);
    } catch (const Json::parse_error& e) {
        return error_reply(ParseError(0, std::string("malformed JSON body: ") + e.what()));
    }
    if (!out.is_object()) {
        return error_reply(ValidationError("", "request body must be a JSON object"));
    }
    return {0, {}};
}

// Registers every endpoint on `server`; the caller owns bind/listen.
inline void mount(httplib::Server& server, Service& service) {
    const auto post = [&](const char* path, Reply (Service::*handler)(const Json&)) {
        server.Post(path, [&service, handler](const httplib::Request& req, httplib::Response& res) {
            Json body;
            if (const Reply bad = parse_body(req, body); bad.status != 0) {
                send(res, bad);
                return;
            }
            send(res, (service.*handler)(body));
        });
    };
    post("/users", &Service::create_user);
    post("/location", &Service::post_location);
    post("/selfreport", &Service::post_selfreport);
    post("/respond", &Service::respond);
    post("/optin", &Service::optin);
    post("/survey", &Service::survey);
    server.Get("/prompt", [&service](const httplib::Request& req, httplib::Response& res) {
        if (!req.has_param("user_id")) {
            send(res, error_reply(ValidationError("user_id", "query parameter user_id is required")));
            return;
        }
        send(res, service.get_prompt(req.get_param_value("user_id")));
    });
    server.Get("/session", [&service](const httplib::Request& req, httplib::Response& res) {
        send(res, service.session_state(req.get_param_value("user_id")));
    });
    server.Get("/metrics", [&service](const httplib::Request&, httplib::Response& res) {
        const Reply r = service.metrics();
        res.status = r.status;
        res.set_content(r.body.dump(2) + "\n", "application/json");
    });
}

} // namespace emma
