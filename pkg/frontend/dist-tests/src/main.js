import { ApiClient } from "./api.js";
import { PanelController } from "./state.js";
import { mountPanel, render } from "./ui.js";
const api = new ApiClient("");
const controller = new PanelController(api, (view) => render(controller, view));
mountPanel(controller);
void controller.refreshTaskLists();
// background refresh keeps the sidebar and the open task live without
// holding any state the API cannot reconstruct after a reload
setInterval(() => {
    void controller.refreshTaskLists();
}, 4000);
setInterval(() => {
    if (controller.view.currentTask && controller.view.state === "running") {
        void controller.pollOutputOnce();
    }
}, 1000);
