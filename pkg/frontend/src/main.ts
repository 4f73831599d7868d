import { StudyApi } from "./api.js";
import { StudyApp } from "./app.js";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}

const app = new StudyApp({
  root,
  api: new StudyApi((url, init) => fetch(url, init)),
  audioFactory: (url) => new Audio(url),
  storage: window.sessionStorage,
  window,
});

void app.start();
