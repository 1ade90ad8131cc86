/* In-page snapshot hook. Captures the rendered page after load,
 * mines link rectangles, and posts both to the page's own origin.
 * Wi-Fi only, fire-and-forget, never blocks rendering. */
(function () {
  "use strict";
  var POST_PATH = "/__ds/post";
  var IDLE_MS = 1000;
  var MAX_MULTIPLIER = 2;

  function connectionClass() {
    var c = navigator.connection || navigator.mozConnection || navigator.webkitConnection;
    if (!c || !c.type) return "unknown";
    return c.type === "cellular" ? "cellular" : "wifi";
  }

  function mineLinks() {
    var out = [];
    var anchors = document.getElementsByTagName("a");
    for (var i = 0; i < anchors.length; i++) {
      var a = anchors[i];
      if (!a.href) continue;
      var r = a.getBoundingClientRect();
      if (r.width <= 0 || r.height <= 0) continue;
      out.push({
        url: a.href,
        left: Math.round(r.left + window.pageXOffset),
        top: Math.round(r.top + window.pageYOffset),
        right: Math.round(r.right + window.pageXOffset),
        bottom: Math.round(r.bottom + window.pageYOffset)
      });
    }
    return out;
  }

  function post(blob, width, height, links) {
    var form = new FormData();
    form.append("image", blob, "snapshot.png");
    form.append("url", window.location.href);
    form.append("links", JSON.stringify(links));
    form.append("viewport_height", String(window.innerHeight));
    form.append("ff_width", String(window.screen.width));
    form.append("ff_height", String(window.screen.height));
    var xhr = new XMLHttpRequest();
    xhr.open("POST", POST_PATH, true);
    xhr.send(form);
  }

  function capture() {
    if (connectionClass() === "cellular") return;
    var height = Math.min(
      document.documentElement.scrollHeight,
      MAX_MULTIPLIER * window.innerHeight
    );
    if (!window.html2canvas) return;
    window
      .html2canvas(document.body, { height: height, logging: false })
      .then(function (canvas) {
        canvas.toBlob(function (blob) {
          if (blob) post(blob, canvas.width, canvas.height, mineLinks());
        }, "image/png");
      })
      .catch(function () { /* never break the host page */ });
  }

  window.addEventListener("load", function () {
    window.setTimeout(capture, IDLE_MS);
  });
})();
