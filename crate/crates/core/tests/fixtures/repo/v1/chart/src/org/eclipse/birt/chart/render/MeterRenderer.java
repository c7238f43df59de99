package org.eclipse.birt.chart.render;

import org.eclipse.birt.chart.computation.withaxes.AutoScale;

public class MeterRenderer {
    private final AutoScale scale = new AutoScale(1.0);

    public void render(Object chart) {
        while (!fits(chart)) {
            scale.zoomOut();
        }
    }

    private boolean fits(Object chart) {
        return chart != null;
    }
}
